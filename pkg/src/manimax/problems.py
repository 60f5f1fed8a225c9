"""Minimax problem definitions and their gradient oracles.

Both problems expose exact and stochastic first-order oracles over a product
of manifolds: the minimization variable lives on ``mx`` and the maximization
variable on ``my``. Stochastic oracles take an explicit index batch plus an
rng handle so the solver controls all randomness.
"""
from __future__ import annotations

import io
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .manifolds import (
    Euclidean,
    ClampCounter,
    Manifold,
    Point,
    SPD,
    Sphere,
    Tangent,
    UnsupportedOperation,
)

__all__ = [
    "ProblemError",
    "NumericalOverflow",
    "EmptyBatch",
    "Batch",
    "MinimaxProblem",
    "RobustMleProblem",
    "SyntheticQuadratic",
    "generate_gaussian_instance",
    "generate_multiscale_instance",
    "generate_quadratic_instance",
    "save_instance_config",
    "save_instance_matrix",
    "load_instance",
]

_INSTANCE_MAGIC = b"RMLEDAT1"


class ProblemError(Exception):
    """Base class for problem-layer failures."""


class NumericalOverflow(ProblemError):
    """An objective or oracle evaluation left the representable range."""


class EmptyBatch(ProblemError):
    """A stochastic oracle was called with no sample indices."""


@dataclass(frozen=True)
class Batch:
    """Sample indices for a stochastic oracle; duplicates are allowed."""

    indices: np.ndarray

    def __post_init__(self) -> None:
        idx = np.atleast_1d(np.asarray(self.indices, dtype=np.int64))
        if idx.ndim != 1 or idx.size == 0:
            raise EmptyBatch("batch must contain at least one index")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return int(self.indices.size)

    @classmethod
    def full(cls, n: int) -> "Batch":
        return cls(np.arange(n, dtype=np.int64))

    @classmethod
    def sample(cls, rng: np.random.Generator, n: int, size: int) -> "Batch":
        """Uniform i.i.d. draw with replacement from range(n)."""
        if size < 1:
            raise EmptyBatch("batch size must be >= 1")
        return cls(rng.integers(0, n, size=size, dtype=np.int64))


class MinimaxProblem(ABC):
    """min over x in mx, max over y in my, of a smooth objective."""

    mx: Manifold
    my: Manifold
    sample_count: int = 1

    @abstractmethod
    def value(self, x: Point, y: Point) -> float:
        ...

    @abstractmethod
    def grad_x(self, x: Point, y: Point) -> Tangent:
        """Exact Riemannian gradient in the minimization variable."""

    @abstractmethod
    def grad_y(self, x: Point, y: Point) -> Tangent:
        """Exact Riemannian gradient in the maximization variable."""

    def stoch_grad_x(self, x: Point, y: Point, batch: Batch, rng: np.random.Generator) -> Tangent:
        raise UnsupportedOperation(f"{type(self).__name__} has no stochastic oracles")

    def stoch_grad_y(self, x: Point, y: Point, batch: Batch, rng: np.random.Generator) -> Tangent:
        raise UnsupportedOperation(f"{type(self).__name__} has no stochastic oracles")

    def inner_max_oracle(self, x: Point) -> tuple[Point, float]:
        """Closed-form argmax over y and the resulting envelope value."""
        raise UnsupportedOperation(f"{type(self).__name__} has no closed-form inner max")

    def default_start(self, rng: np.random.Generator) -> tuple[Point, Point]:
        """Deterministic-in-rng initial iterates; subclasses pick natural ones."""
        return self.mx.random_point(rng), self.my.random_point(rng)

    def _check_batch(self, batch: Batch) -> None:
        if len(batch) == 0:
            raise EmptyBatch("batch must contain at least one index")
        lo = int(batch.indices.min())
        hi = int(batch.indices.max())
        if lo < 0 or hi >= self.sample_count:
            raise ProblemError(
                f"batch index out of range [0, {self.sample_count}): saw {lo}..{hi}"
            )


class RobustMleProblem(MinimaxProblem):
    """Robust location estimation against a worst-case covariance.

    Data rows a_i in R^d are lifted to z_i = [a_i, 1]. The minimization
    variable x lives on the unit sphere in R^(d+1); the adversarial
    covariance Y on SPD(d+1). The objective is

        f(x, Y) = -(n/2) log det Y
                  - (1/2) sum_i (z_i - x)^T Y^-1 (z_i - x)
                  + c * dist(Y, I)^2

    with dist the affine-invariant SPD distance. Per-sample objectives keep
    the deterministic log-det and regularizer terms in full and scale the
    quadratic term of row i by n, which makes single-sample estimators
    exactly unbiased.
    """

    def __init__(self, data: np.ndarray, c: float, clamp_counter: ClampCounter | None = None) -> None:
        A = np.asarray(data, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise ProblemError("data must be a nonempty 2-d array")
        if not np.all(np.isfinite(A)):
            raise ProblemError("data contains non-finite entries")
        self.a = A.copy()
        self.a.setflags(write=False)
        self.c = float(c)
        self.n, self.d = A.shape
        self.z = np.hstack([self.a, np.ones((self.n, 1))])
        self.z.setflags(write=False)
        self.mx: Sphere = Sphere(self.d + 1, 1.0)
        self.my: SPD = SPD(self.d + 1, clamp_counter=clamp_counter)
        self.sample_count = self.n

    # -- shared kernels ----------------------------------------------------

    def _y_matrix(self, y: Point) -> np.ndarray:
        return y.data.reshape(self.d + 1, self.d + 1)

    def _quad_rows(self, x: Point, batch: Batch | None) -> np.ndarray:
        rows = self.z if batch is None else self.z[batch.indices]
        return rows - x.data

    def value(self, x: Point, y: Point) -> float:
        Y = self._y_matrix(y)
        w, Q = self.my.spectrum(Y)
        logs = np.log(w)
        y_inv = (Q / w) @ Q.T
        W = self._quad_rows(x, None)
        with np.errstate(over="ignore", invalid="ignore"):
            quad = float(np.sum((W @ y_inv) * W))
            val = -0.5 * self.n * float(logs.sum()) - 0.5 * quad + self.c * float(np.dot(logs, logs))
        if not np.isfinite(val):
            raise NumericalOverflow(f"objective overflowed (logdet={float(logs.sum()):.6g})")
        return val

    def _grad_x_eucl(self, x: Point, y: Point, batch: Batch | None) -> np.ndarray:
        Y = self._y_matrix(y)
        w, Q = self.my.spectrum(Y)
        y_inv = (Q / w) @ Q.T
        return y_inv @ self._quad_rows(x, batch).sum(axis=0)

    def _grad_y_mat(self, x: Point, y: Point, batch: Batch | None, scale: float | None) -> np.ndarray:
        # Riemannian gradient under the affine-invariant metric: sandwiching
        # the Euclidean partial by Y collapses to -(n/2) Y + (1/2) W^T W, and
        # the regularizer contributes 2c * Y logm(Y).
        Y = self._y_matrix(y)
        w, Q = self.my.spectrum(Y)
        W = self._quad_rows(x, batch)
        quad = W.T @ W
        if scale is not None:
            quad = scale * quad
        reg = (Q * (w * np.log(w))) @ Q.T
        M = -0.5 * self.n * Y + 0.5 * quad + (2.0 * self.c) * reg
        return 0.5 * (M + M.T)

    # -- exact oracles -------------------------------------------------------

    def grad_x(self, x: Point, y: Point) -> Tangent:
        return self.mx.project_tangent(x, self._grad_x_eucl(x, y, None))

    def grad_y(self, x: Point, y: Point) -> Tangent:
        return Tangent(y, self._grad_y_mat(x, y, None, None).reshape(-1))

    # -- stochastic oracles ---------------------------------------------------

    def stoch_grad_x(self, x: Point, y: Point, batch: Batch, rng: np.random.Generator) -> Tangent:
        self._check_batch(batch)
        g = (self.n / len(batch)) * self._grad_x_eucl(x, y, batch)
        return self.mx.project_tangent(x, g)

    def stoch_grad_y(self, x: Point, y: Point, batch: Batch, rng: np.random.Generator) -> Tangent:
        self._check_batch(batch)
        M = self._grad_y_mat(x, y, batch, self.n / len(batch))
        return Tangent(y, M.reshape(-1))

    def default_start(self, rng: np.random.Generator) -> tuple[Point, Point]:
        """Random location on the sphere; the covariance starts at identity."""
        x0 = self.mx.random_point(rng)
        y0 = Point(self.my, np.eye(self.d + 1).reshape(-1))
        return x0, y0


class SyntheticQuadratic(MinimaxProblem):
    """f(x, y) = <Ax, y> - (mu/2) ||y||^2 + <b, x> on a sphere cross R^m.

    Strongly concave in y with the closed-form maximizer y*(x) = Ax / mu and
    envelope ||Ax||^2 / (2 mu) + <b, x>. The stochastic oracles add isotropic
    Gaussian noise (standard deviation sigma / sqrt(batch size)) in the
    ambient space and project it to the tangent space, so they are unbiased
    by linearity of the projection.
    """

    def __init__(self, matrix: np.ndarray, mu: float, offset: np.ndarray, noise_sigma: float = 0.1) -> None:
        A = np.asarray(matrix, dtype=np.float64)
        b = np.asarray(offset, dtype=np.float64).reshape(-1)
        if A.ndim != 2:
            raise ProblemError("matrix must be 2-d")
        if b.size != A.shape[1]:
            raise ProblemError("offset length must match the column count")
        if not mu > 0:
            raise ProblemError("mu must be positive")
        if noise_sigma < 0:
            raise ProblemError("noise sigma must be nonnegative")
        self.a_mat = A.copy()
        self.a_mat.setflags(write=False)
        self.mu = float(mu)
        self.b = b.copy()
        self.b.setflags(write=False)
        self.noise_sigma = float(noise_sigma)
        self.m, self.k = A.shape
        self.mx: Sphere = Sphere(self.k, 1.0)
        self.my: Euclidean = Euclidean(self.m)
        self.sample_count = 1

    def value(self, x: Point, y: Point) -> float:
        val = float(y.data @ (self.a_mat @ x.data)) - 0.5 * self.mu * float(y.data @ y.data)
        val += float(self.b @ x.data)
        if not np.isfinite(val):
            raise NumericalOverflow("objective overflowed")
        return val

    def grad_x(self, x: Point, y: Point) -> Tangent:
        return self.mx.project_tangent(x, self.a_mat.T @ y.data + self.b)

    def grad_y(self, x: Point, y: Point) -> Tangent:
        return Tangent(y, self.a_mat @ x.data - self.mu * y.data)

    def stoch_grad_x(self, x: Point, y: Point, batch: Batch, rng: np.random.Generator) -> Tangent:
        self._check_batch(batch)
        g = self.a_mat.T @ y.data + self.b
        if self.noise_sigma > 0.0:
            g = g + (self.noise_sigma / np.sqrt(len(batch))) * rng.standard_normal(self.k)
        return self.mx.project_tangent(x, g)

    def stoch_grad_y(self, x: Point, y: Point, batch: Batch, rng: np.random.Generator) -> Tangent:
        self._check_batch(batch)
        g = self.a_mat @ x.data - self.mu * y.data
        if self.noise_sigma > 0.0:
            g = g + (self.noise_sigma / np.sqrt(len(batch))) * rng.standard_normal(self.m)
        return Tangent(y, g)

    def inner_max_oracle(self, x: Point) -> tuple[Point, float]:
        self.mx._require_point(x)
        ax = self.a_mat @ x.data
        y_star = Point(self.my, ax / self.mu)
        phi = float(ax @ ax) / (2.0 * self.mu) + float(self.b @ x.data)
        return y_star, phi

    def _check_batch(self, batch: Batch) -> None:
        # sample_count is 1; any nonempty batch of zeros is a full batch.
        if len(batch) == 0:
            raise EmptyBatch("batch must contain at least one index")
        if int(batch.indices.min()) < 0 or int(batch.indices.max()) >= self.sample_count:
            raise ProblemError("batch index out of range for a single-sample problem")

    def default_start(self, rng: np.random.Generator) -> tuple[Point, Point]:
        """Random location on the sphere; the ascent variable starts at zero."""
        x0 = self.mx.random_point(rng)
        y0 = Point(self.my, np.zeros(self.m))
        return x0, y0


def generate_gaussian_instance(d: int, n: int, c: float, seed: int,
                               clamp_counter: ClampCounter | None = None) -> RobustMleProblem:
    """Robust MLE instance with rows a_i drawn i.i.d. standard normal."""
    rng = np.random.default_rng(seed)
    return RobustMleProblem(rng.standard_normal((n, d)), c, clamp_counter=clamp_counter)


def generate_quadratic_instance(k: int, m: int, mu: float, seed: int,
                                noise_sigma: float = 0.1) -> SyntheticQuadratic:
    """Synthetic quadratic with a standard normal coupling matrix and offset."""
    rng = np.random.default_rng(seed)
    return SyntheticQuadratic(rng.standard_normal((m, k)), mu, rng.standard_normal(k), noise_sigma)


def generate_multiscale_instance(k: int, m: int, span: float, seed: int,
                                 noise_sigma: float = 0.1) -> SyntheticQuadratic:
    """Synthetic quadratic whose coupling spectrum decays over `span` decades.

    The squared singular values of the coupling matrix are log-spaced in
    [10**-span, 1] and the linear offset is zero, so the envelope objective
    has near-degenerate directions at every scale in that window. Gradient
    norms then decay like a power of the iteration count for thousands of
    steps instead of collapsing geometrically, which is what a rate fit
    over a budget ladder needs. Randomness only rotates the singular bases.
    """
    if span <= 0:
        raise ProblemError("span must be positive")
    rng = np.random.default_rng(seed)
    p = min(k, m)
    left, _ = np.linalg.qr(rng.standard_normal((m, m)))
    right, _ = np.linalg.qr(rng.standard_normal((k, k)))
    singulars = np.sqrt(10.0 ** np.linspace(0.0, -span, p))
    coupling = left[:, :p] @ (singulars[:, None] * right[:, :p].T)
    return SyntheticQuadratic(coupling, 1.0, np.zeros(k), noise_sigma)


# -- instance files ----------------------------------------------------------
#
# Two interchangeable formats. The text form stores {d, n, c, seed} as
# key = value lines and regenerates the data deterministically; the binary
# form embeds the data matrix row-major float64 after an 8-byte magic and a
# (d, n, c) header.


def save_instance_config(path: str | Path, d: int, n: int, c: float, seed: int) -> None:
    lines = [f"d = {int(d)}", f"n = {int(n)}", f"c = {float(c)!r}", f"seed = {int(seed)}"]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_instance_matrix(path: str | Path, problem: RobustMleProblem) -> None:
    buf = io.BytesIO()
    buf.write(_INSTANCE_MAGIC)
    buf.write(struct.pack("<qqd", problem.d, problem.n, problem.c))
    buf.write(np.ascontiguousarray(problem.a, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_instance(path: str | Path) -> RobustMleProblem:
    raw = Path(path).read_bytes()
    if raw.startswith(_INSTANCE_MAGIC):
        off = len(_INSTANCE_MAGIC)
        d, n, c = struct.unpack_from("<qqd", raw, off)
        off += struct.calcsize("<qqd")
        data = np.frombuffer(raw, dtype="<f8", count=n * d, offset=off).reshape(n, d)
        return RobustMleProblem(data, c)
    fields: dict[str, str] = {}
    for line in raw.decode("utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    try:
        return generate_gaussian_instance(
            d=int(fields["d"]), n=int(fields["n"]), c=float(fields["c"]), seed=int(fields["seed"])
        )
    except KeyError as missing:
        raise ProblemError(f"instance file is missing field {missing}") from None
