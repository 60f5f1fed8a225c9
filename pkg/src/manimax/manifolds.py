"""Geometry kernels for the manifolds used by the minimax solvers.

Points and tangents are immutable wrappers around flat float64 arrays; each
manifold interprets that storage and owns the metric, retraction, exponential
and logarithm maps, transport, distance, and random sampling. All operations
are pure: they validate their inputs, never mutate them, and return fresh
values.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .tolerances import DEFAULT_TOLERANCES, ToleranceProfile

__all__ = [
    "GeometryError",
    "InvalidGeometry",
    "BaseMismatch",
    "DegenerateRetraction",
    "AntipodalPoints",
    "UnsupportedOperation",
    "ClampCounter",
    "Point",
    "Tangent",
    "Manifold",
    "Euclidean",
    "Sphere",
    "Stiefel",
    "SPD",
    "ProductManifold",
    "GeometryReport",
    "manifold_to_header",
    "manifold_from_header",
    "serialize_point",
    "deserialize_point",
    "serialize_tangent",
    "deserialize_tangent",
]


class GeometryError(Exception):
    """Base class for geometry-layer failures."""


class InvalidGeometry(GeometryError):
    """Array data violates a point or tangent invariant."""


class BaseMismatch(GeometryError):
    """Tangents rooted at different base points were combined."""


class DegenerateRetraction(GeometryError):
    """Retraction input collapsed (zero sum on the sphere, rank-deficient QR)."""


class AntipodalPoints(GeometryError):
    """Sphere logarithm and transport are undefined between antipodal points."""


class UnsupportedOperation(GeometryError):
    """The manifold does not provide this map (e.g. Stiefel exp/log)."""


@dataclass
class ClampCounter:
    """Counts eigenvalue clamp events inside SPD matrix functions.

    There is no global counter: a call site that wants visibility attaches its
    own instance to the SPD manifold it constructs.
    """

    events: int = 0

    def bump(self, k: int = 1) -> None:
        self.events += k


@dataclass(frozen=True, eq=False)
class Point:
    """A point on ``manifold``, stored as a read-only flat float64 array."""

    manifold: "Manifold"
    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64, copy=True).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        self.manifold.check_point(arr)

    def __repr__(self) -> str:
        return f"Point({self.manifold!r}, n={self.data.size})"


@dataclass(frozen=True, eq=False)
class Tangent:
    """A tangent vector at ``base``, in the same flat storage as points."""

    base: Point
    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64, copy=True).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        self.base.manifold.check_tangent(self.base.data, arr)

    @property
    def manifold(self) -> "Manifold":
        return self.base.manifold

    def scaled(self, s: float) -> "Tangent":
        return Tangent(self.base, s * self.data)

    def __repr__(self) -> str:
        return f"Tangent(base={self.base!r})"


class Manifold:
    """Base class owning validation plus the shared parts of the metric."""

    kind: str = "abstract"

    def __init__(self, tol: ToleranceProfile = DEFAULT_TOLERANCES) -> None:
        self.tol = tol

    # -- identity ---------------------------------------------------------

    @property
    def ambient_size(self) -> int:
        raise NotImplementedError

    def spec_key(self) -> tuple:
        """Geometry identity: kind plus dimensions (tolerances excluded)."""
        raise NotImplementedError

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Manifold) and self.spec_key() == other.spec_key()

    def __hash__(self) -> int:
        return hash(self.spec_key())

    def __repr__(self) -> str:
        kind, *dims = self.spec_key()
        return f"{type(self).__name__}({', '.join(str(d) for d in dims)})"

    # -- validation -------------------------------------------------------

    def check_point(self, data: np.ndarray) -> None:
        if data.shape != (self.ambient_size,):
            raise InvalidGeometry(
                f"{self.kind} point needs {self.ambient_size} entries, got {data.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise InvalidGeometry(f"{self.kind} point contains non-finite entries")
        self._check_point(data)

    def check_tangent(self, base: np.ndarray, data: np.ndarray) -> None:
        if data.shape != (self.ambient_size,):
            raise InvalidGeometry(
                f"{self.kind} tangent needs {self.ambient_size} entries, got {data.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise InvalidGeometry(f"{self.kind} tangent contains non-finite entries")
        self._check_tangent(base, data)

    def _check_point(self, data: np.ndarray) -> None:
        raise NotImplementedError

    def _check_tangent(self, base: np.ndarray, data: np.ndarray) -> None:
        raise NotImplementedError

    def _require_point(self, x: Point) -> None:
        if x.manifold.spec_key() != self.spec_key():
            raise InvalidGeometry(f"point lives on {x.manifold!r}, expected {self!r}")

    def _require_rooted(self, x: Point, u: Tangent) -> None:
        self._require_point(x)
        self._require_point(u.base)
        if np.max(np.abs(u.base.data - x.data), initial=0.0) > self.tol.base_match:
            raise BaseMismatch("tangent is rooted at a different point")

    def _require_same_base(self, u: Tangent, v: Tangent) -> None:
        self._require_point(u.base)
        self._require_point(v.base)
        if np.max(np.abs(u.base.data - v.base.data), initial=0.0) > self.tol.base_match:
            raise BaseMismatch("tangents are rooted at different points")

    # -- metric -----------------------------------------------------------

    def inner(self, u: Tangent, v: Tangent) -> float:
        """Riemannian inner product of two tangents at the same base."""
        self._require_same_base(u, v)
        return self._inner_data(u.base.data, u.data, v.data)

    def norm(self, u: Tangent) -> float:
        self._require_point(u.base)
        return float(np.sqrt(self._inner_data(u.base.data, u.data, u.data)))

    def _inner_data(self, base: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
        # Ambient (Frobenius) metric; SPD overrides with the affine-invariant one.
        return float(np.dot(u, v))

    # -- maps ---------------------------------------------------------------

    @property
    def has_exp(self) -> bool:
        """Whether exp/log (and hence exact geodesics) are available."""
        return True

    def retract(self, x: Point, u: Tangent) -> Point:
        raise NotImplementedError

    def exp(self, x: Point, u: Tangent) -> Point:
        raise NotImplementedError

    def log(self, x: Point, y: Point) -> Tangent:
        raise NotImplementedError

    def transport(self, src: Point, dst: Point, u: Tangent) -> Tangent:
        raise NotImplementedError

    def dist(self, x: Point, y: Point) -> float:
        raise NotImplementedError

    def project_tangent(self, x: Point, ambient: np.ndarray) -> Tangent:
        """Map an ambient (Euclidean) gradient to the tangent representation."""
        raise NotImplementedError

    def zero_tangent(self, x: Point) -> Tangent:
        self._require_point(x)
        return Tangent(x, np.zeros(self.ambient_size))

    # -- sampling -----------------------------------------------------------

    def random_point(self, rng: np.random.Generator) -> Point:
        raise NotImplementedError

    def random_tangent(self, x: Point, rng: np.random.Generator, norm: float = 1.0) -> Tangent:
        """A tangent at x with the requested Riemannian norm."""
        if norm < 0:
            raise InvalidGeometry("tangent norm must be nonnegative")
        self._require_point(x)
        if norm == 0.0:
            return self.zero_tangent(x)
        for _ in range(64):
            raw = self._random_tangent_data(x.data, rng)
            scale = float(np.sqrt(self._inner_data(x.data, raw, raw)))
            if scale > 1e-12:
                return Tangent(x, (norm / scale) * raw)
        raise InvalidGeometry("failed to draw a nonzero tangent")

    def _random_tangent_data(self, base: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class Euclidean(Manifold):
    """Flat R^m with the usual inner product."""

    kind = "euclidean"

    def __init__(self, dim: int, tol: ToleranceProfile = DEFAULT_TOLERANCES) -> None:
        if dim < 1:
            raise InvalidGeometry("Euclidean dimension must be >= 1")
        super().__init__(tol)
        self.dim = int(dim)

    @property
    def ambient_size(self) -> int:
        return self.dim

    def spec_key(self) -> tuple:
        return ("euclidean", self.dim)

    def _check_point(self, data: np.ndarray) -> None:
        pass

    def _check_tangent(self, base: np.ndarray, data: np.ndarray) -> None:
        pass

    def retract(self, x: Point, u: Tangent) -> Point:
        self._require_rooted(x, u)
        if not u.data.any():
            return x
        return Point(self, x.data + u.data)

    exp = retract

    def log(self, x: Point, y: Point) -> Tangent:
        self._require_point(x)
        self._require_point(y)
        return Tangent(x, y.data - x.data)

    def transport(self, src: Point, dst: Point, u: Tangent) -> Tangent:
        self._require_rooted(src, u)
        self._require_point(dst)
        return Tangent(dst, u.data)

    def dist(self, x: Point, y: Point) -> float:
        self._require_point(x)
        self._require_point(y)
        return float(np.linalg.norm(y.data - x.data))

    def project_tangent(self, x: Point, ambient: np.ndarray) -> Tangent:
        self._require_point(x)
        return Tangent(x, np.asarray(ambient, dtype=np.float64).reshape(-1))

    def random_point(self, rng: np.random.Generator) -> Point:
        return Point(self, rng.standard_normal(self.dim))

    def _random_tangent_data(self, base: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.dim)


class Sphere(Manifold):
    """The radius-r sphere in R^d with the induced (ambient) metric."""

    kind = "sphere"

    def __init__(self, dim: int, radius: float = 1.0, tol: ToleranceProfile = DEFAULT_TOLERANCES) -> None:
        if dim < 2:
            raise InvalidGeometry("sphere needs ambient dimension >= 2")
        if not radius > 0:
            raise InvalidGeometry("sphere radius must be positive")
        super().__init__(tol)
        self.dim = int(dim)
        self.radius = float(radius)

    @property
    def ambient_size(self) -> int:
        return self.dim

    def spec_key(self) -> tuple:
        return ("sphere", self.dim, self.radius)

    def _check_point(self, data: np.ndarray) -> None:
        r = self.radius
        if abs(np.linalg.norm(data) - r) > self.tol.sphere_point_rel * r:
            raise InvalidGeometry(f"point norm {np.linalg.norm(data):.17g} != radius {r}")

    def _check_tangent(self, base: np.ndarray, data: np.ndarray) -> None:
        r = self.radius
        # Relative bound plus an absolute floor: the radial residue left by
        # roundoff is proportional to the base scale, not the tangent scale,
        # so near-zero tangents would otherwise fail a purely relative test.
        bound = self.tol.sphere_tangent_rel * r * np.linalg.norm(data) + self.tol.degenerate_norm * r * r
        if abs(float(np.dot(base, data))) > bound:
            raise InvalidGeometry("tangent is not orthogonal to the sphere point")

    def retract(self, x: Point, u: Tangent) -> Point:
        """Metric rescaling: r * (x + u) / ||x + u||."""
        self._require_rooted(x, u)
        if not u.data.any():
            return x
        s = x.data + u.data
        ns = float(np.linalg.norm(s))
        if ns < self.tol.degenerate_norm:
            raise DegenerateRetraction("x + u collapsed to the origin")
        return Point(self, (self.radius / ns) * s)

    def exp(self, x: Point, u: Tangent) -> Point:
        self._require_rooted(x, u)
        nu = float(np.linalg.norm(u.data))
        if nu == 0.0:
            return x
        t = nu / self.radius
        return Point(self, np.cos(t) * x.data + (self.radius * np.sin(t) / nu) * u.data)

    def _cos_angle(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.dot(x, y)) / self.radius**2

    def log(self, x: Point, y: Point) -> Tangent:
        self._require_point(x)
        self._require_point(y)
        c = self._cos_angle(x.data, y.data)
        if c <= -1.0 + self.tol.antipodal_margin:
            raise AntipodalPoints("logarithm is undefined for antipodal points")
        theta = float(np.arccos(np.clip(c, -1.0, 1.0)))
        perp = y.data - c * x.data
        np_norm = float(np.linalg.norm(perp))
        if np_norm == 0.0:
            return self.zero_tangent(x)
        return Tangent(x, (theta * self.radius / np_norm) * perp)

    def transport(self, src: Point, dst: Point, u: Tangent) -> Tangent:
        """Parallel transport along the minimizing geodesic from src to dst.

        Rotates the component of u in the src-direction plane and leaves the
        orthogonal complement untouched; an isometry of the round metric.
        """
        self._require_rooted(src, u)
        self._require_point(dst)
        if np.array_equal(src.data, dst.data):
            return Tangent(dst, u.data)
        v = self.log(src, dst)
        d = float(np.linalg.norm(v.data))
        if d == 0.0:
            return Tangent(dst, u.data)
        e = v.data / d
        t = d / self.radius
        along = float(np.dot(u.data, e))
        rotated = np.cos(t) * e - (np.sin(t) / self.radius) * src.data
        return Tangent(dst, u.data + along * (rotated - e))

    def dist(self, x: Point, y: Point) -> float:
        self._require_point(x)
        self._require_point(y)
        c = np.clip(self._cos_angle(x.data, y.data), -1.0, 1.0)
        return self.radius * float(np.arccos(c))

    def project_tangent(self, x: Point, ambient: np.ndarray) -> Tangent:
        self._require_point(x)
        a = np.asarray(ambient, dtype=np.float64).reshape(-1)
        r2 = self.radius**2
        out = a - (float(np.dot(x.data, a)) / r2) * x.data
        # Second pass scrubs the residual normal component left by cancellation
        # when the input is nearly parallel to x.
        out -= (float(np.dot(x.data, out)) / r2) * x.data
        return Tangent(x, out)

    def random_point(self, rng: np.random.Generator) -> Point:
        for _ in range(64):
            v = rng.standard_normal(self.dim)
            n = float(np.linalg.norm(v))
            if n > 1e-12:
                return Point(self, (self.radius / n) * v)
        raise InvalidGeometry("failed to draw a sphere point")

    def _random_tangent_data(self, base: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        v = rng.standard_normal(self.dim)
        v -= (float(np.dot(base, v)) / self.radius**2) * base
        return v


def _sym(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


class Stiefel(Manifold):
    """Matrices with orthonormal columns, embedded metric, QR retraction.

    The exponential, logarithm, and an isometric transport are deliberately
    absent; projection transport is available but is not an isometry.
    """

    kind = "stiefel"

    def __init__(self, rows: int, cols: int, tol: ToleranceProfile = DEFAULT_TOLERANCES) -> None:
        if rows < 1 or cols < 1 or cols > rows:
            raise InvalidGeometry("Stiefel needs rows >= cols >= 1")
        super().__init__(tol)
        self.rows = int(rows)
        self.cols = int(cols)

    @property
    def ambient_size(self) -> int:
        return self.rows * self.cols

    def spec_key(self) -> tuple:
        return ("stiefel", self.rows, self.cols)

    def _mat(self, data: np.ndarray) -> np.ndarray:
        return data.reshape(self.rows, self.cols)

    def _check_point(self, data: np.ndarray) -> None:
        X = self._mat(data)
        gram_err = np.linalg.norm(X.T @ X - np.eye(self.cols))
        if gram_err > self.tol.stiefel_orth:
            raise InvalidGeometry(f"columns not orthonormal (||X^T X - I|| = {gram_err:.3e})")

    def _check_tangent(self, base: np.ndarray, data: np.ndarray) -> None:
        X = self._mat(base)
        U = self._mat(data)
        skew_err = np.linalg.norm(X.T @ U + U.T @ X)
        if skew_err > self.tol.stiefel_tangent:
            raise InvalidGeometry(f"X^T U not skew (||X^T U + U^T X|| = {skew_err:.3e})")

    @property
    def has_exp(self) -> bool:
        return False

    def retract(self, x: Point, u: Tangent) -> Point:
        """QR retraction with the R diagonal forced positive."""
        self._require_rooted(x, u)
        if not u.data.any():
            return x
        S = self._mat(x.data) + self._mat(u.data)
        Q, R = np.linalg.qr(S)
        diag = np.diag(R)
        floor = self.tol.degenerate_norm * max(1.0, float(np.abs(diag).max()))
        if np.any(np.abs(diag) < floor):
            raise DegenerateRetraction("x + u is numerically rank deficient")
        Q = Q * np.sign(diag)
        return Point(self, Q.reshape(-1))

    def exp(self, x: Point, u: Tangent) -> Point:
        raise UnsupportedOperation("Stiefel exponential map is not provided")

    def log(self, x: Point, y: Point) -> Tangent:
        raise UnsupportedOperation("Stiefel logarithm map is not provided")

    def transport(self, src: Point, dst: Point, u: Tangent) -> Tangent:
        """Projection transport: project u onto the tangent space at dst."""
        self._require_rooted(src, u)
        self._require_point(dst)
        return self.project_tangent(dst, u.data)

    def dist(self, x: Point, y: Point) -> float:
        """Frobenius distance between representatives; reporting only."""
        self._require_point(x)
        self._require_point(y)
        return float(np.linalg.norm(y.data - x.data))

    def project_tangent(self, x: Point, ambient: np.ndarray) -> Tangent:
        self._require_point(x)
        X = self._mat(x.data)
        A = np.asarray(ambient, dtype=np.float64).reshape(self.rows, self.cols)
        U = A - X @ _sym(X.T @ A)
        U -= X @ _sym(X.T @ U)
        return Tangent(x, U.reshape(-1))

    def random_point(self, rng: np.random.Generator) -> Point:
        A = rng.standard_normal((self.rows, self.cols))
        Q, R = np.linalg.qr(A)
        Q = Q * np.sign(np.diag(R))
        return Point(self, Q.reshape(-1))

    def _random_tangent_data(self, base: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        X = self._mat(base)
        A = rng.standard_normal((self.rows, self.cols))
        U = A - X @ _sym(X.T @ A)
        return U.reshape(-1)


class SPD(Manifold):
    """Symmetric positive definite matrices with the affine-invariant metric.

    <U, V>_X = trace(X^-1 U X^-1 V). The exponential map doubles as the
    retraction. Matrix functions go through symmetric eigendecompositions with
    eigenvalues clamped below at eig_floor_rel * lambda_max; clamp events bump
    the attached ClampCounter when one is present.
    """

    kind = "spd"

    def __init__(
        self,
        order: int,
        tol: ToleranceProfile = DEFAULT_TOLERANCES,
        clamp_counter: ClampCounter | None = None,
    ) -> None:
        if order < 1:
            raise InvalidGeometry("SPD order must be >= 1")
        super().__init__(tol)
        self.order = int(order)
        self.clamp_counter = clamp_counter

    @property
    def ambient_size(self) -> int:
        return self.order * self.order

    def spec_key(self) -> tuple:
        return ("spd", self.order)

    def _mat(self, data: np.ndarray) -> np.ndarray:
        return data.reshape(self.order, self.order)

    def _check_sym(self, M: np.ndarray, what: str) -> None:
        scale = max(1.0, float(np.abs(M).max(initial=0.0)))
        if float(np.abs(M - M.T).max(initial=0.0)) > self.tol.spd_symmetry * scale:
            raise InvalidGeometry(f"{what} is not symmetric")

    def _check_point(self, data: np.ndarray) -> None:
        M = self._mat(data)
        self._check_sym(M, "SPD point")
        w = np.linalg.eigvalsh(_sym(M))
        if w[0] <= 0.0:
            raise InvalidGeometry(f"matrix is not positive definite (min eig {w[0]:.3e})")

    def _check_tangent(self, base: np.ndarray, data: np.ndarray) -> None:
        self._check_sym(self._mat(data), "SPD tangent")

    def spectrum(self, M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Eigendecomposition of a symmetric matrix with the clamp policy."""
        w, Q = np.linalg.eigh(_sym(M))
        if not np.all(np.isfinite(w)):
            raise InvalidGeometry("eigendecomposition produced non-finite values")
        floor = self.tol.eig_floor_rel * float(w[-1])
        if floor > 0.0:
            low = w < floor
            if np.any(low):
                if self.clamp_counter is not None:
                    self.clamp_counter.bump(int(low.sum()))
                w = np.maximum(w, floor)
        return w, Q

    def _inner_data(self, base: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
        w, Q = self.spectrum(self._mat(base))
        U = Q.T @ self._mat(u) @ Q
        V = Q.T @ self._mat(v) @ Q
        return float(np.sum(U * V / np.outer(w, w)))

    def retract(self, x: Point, u: Tangent) -> Point:
        return self.exp(x, u)

    def exp(self, x: Point, u: Tangent) -> Point:
        """X^1/2 expm(X^-1/2 U X^-1/2) X^1/2 via eigendecompositions."""
        self._require_rooted(x, u)
        if not u.data.any():
            return x
        w, Q = self.spectrum(self._mat(x.data))
        rt = Q * np.sqrt(w)          # X^1/2 = rt @ Q.T
        irt = Q / np.sqrt(w)         # X^-1/2 = irt @ Q.T
        S = _sym(irt.T @ self._mat(u.data) @ irt)
        ws, Qs = np.linalg.eigh(S)
        if not np.all(np.isfinite(ws)):
            raise InvalidGeometry("exp map inner matrix is not finite")
        E = (Qs * np.exp(ws)) @ Qs.T
        out = _sym(rt @ E @ rt.T)
        return Point(self, out.reshape(-1))

    def log(self, x: Point, y: Point) -> Tangent:
        """X^1/2 logm(X^-1/2 Y X^-1/2) X^1/2."""
        self._require_point(x)
        self._require_point(y)
        w, Q = self.spectrum(self._mat(x.data))
        rt = Q * np.sqrt(w)
        irt = Q / np.sqrt(w)
        S = _sym(irt.T @ self._mat(y.data) @ irt)
        ws, Qs = self.spectrum(S)
        L = (Qs * np.log(ws)) @ Qs.T
        out = _sym(rt @ L @ rt.T)
        return Tangent(x, out.reshape(-1))

    def transport(self, src: Point, dst: Point, u: Tangent) -> Tangent:
        """Parallel transport E U E^T with E = (Y X^-1)^1/2; an exact isometry."""
        self._require_rooted(src, u)
        self._require_point(dst)
        if np.array_equal(src.data, dst.data):
            return Tangent(dst, u.data)
        w, Q = self.spectrum(self._mat(src.data))
        rt = Q * np.sqrt(w)
        irt = Q / np.sqrt(w)
        S = _sym(irt.T @ self._mat(dst.data) @ irt)
        ws, Qs = self.spectrum(S)
        halfS = (Qs * np.sqrt(ws)) @ Qs.T
        E = rt @ halfS @ irt.T
        out = _sym(E @ self._mat(u.data) @ E.T)
        return Tangent(dst, out.reshape(-1))

    def dist(self, x: Point, y: Point) -> float:
        """Affine-invariant distance ||logm(X^-1/2 Y X^-1/2)||_F."""
        self._require_point(x)
        self._require_point(y)
        w, Q = self.spectrum(self._mat(x.data))
        irt = Q / np.sqrt(w)
        S = _sym(irt.T @ self._mat(y.data) @ irt)
        ws, _ = self.spectrum(S)
        return float(np.linalg.norm(np.log(ws)))

    def project_tangent(self, x: Point, ambient: np.ndarray) -> Tangent:
        """X sym(a) X: converts a Euclidean gradient to the Riemannian one."""
        self._require_point(x)
        X = self._mat(x.data)
        A = _sym(np.asarray(ambient, dtype=np.float64).reshape(self.order, self.order))
        return Tangent(x, _sym(X @ A @ X).reshape(-1))

    def random_point(self, rng: np.random.Generator) -> Point:
        A = rng.standard_normal((self.order, self.order))
        S = _sym(A) / np.sqrt(self.order)
        w, Q = np.linalg.eigh(S)
        X = (Q * np.exp(w)) @ Q.T
        return Point(self, _sym(X).reshape(-1))

    def _random_tangent_data(self, base: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return _sym(rng.standard_normal((self.order, self.order))).reshape(-1)


class ProductManifold(Manifold):
    """Cartesian product with the sum metric; storage is the concatenation."""

    kind = "product"

    def __init__(self, factors: tuple[Manifold, ...] | list[Manifold],
                 tol: ToleranceProfile = DEFAULT_TOLERANCES) -> None:
        if not factors:
            raise InvalidGeometry("product needs at least one factor")
        super().__init__(tol)
        self.factors = tuple(factors)
        sizes = [f.ambient_size for f in self.factors]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    @property
    def ambient_size(self) -> int:
        return int(self._offsets[-1])

    def spec_key(self) -> tuple:
        return ("product",) + tuple(f.spec_key() for f in self.factors)

    def _slices(self, data: np.ndarray) -> list[np.ndarray]:
        return [data[self._offsets[i]:self._offsets[i + 1]] for i in range(len(self.factors))]

    def _check_point(self, data: np.ndarray) -> None:
        for f, part in zip(self.factors, self._slices(data)):
            f.check_point(part)

    def _check_tangent(self, base: np.ndarray, data: np.ndarray) -> None:
        for f, b, part in zip(self.factors, self._slices(base), self._slices(data)):
            f.check_tangent(b, part)

    @property
    def has_exp(self) -> bool:
        return all(f.has_exp for f in self.factors)

    def _inner_data(self, base: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
        return sum(
            f._inner_data(b, uu, vv)
            for f, b, uu, vv in zip(self.factors, self._slices(base), self._slices(u), self._slices(v))
        )

    def _map_pieces(self, op: str, x: Point, other) -> np.ndarray:
        parts = []
        for i, f in enumerate(self.factors):
            lo, hi = self._offsets[i], self._offsets[i + 1]
            xp = Point(f, x.data[lo:hi])
            if op in ("retract", "exp"):
                up = Tangent(xp, other.data[lo:hi])
                parts.append(getattr(f, op)(xp, up).data)
            elif op == "log":
                yp = Point(f, other.data[lo:hi])
                parts.append(f.log(xp, yp).data)
        return np.concatenate(parts)

    def retract(self, x: Point, u: Tangent) -> Point:
        self._require_rooted(x, u)
        return Point(self, self._map_pieces("retract", x, u))

    def exp(self, x: Point, u: Tangent) -> Point:
        self._require_rooted(x, u)
        if not self.has_exp:
            raise UnsupportedOperation("a product factor lacks the exponential map")
        return Point(self, self._map_pieces("exp", x, u))

    def log(self, x: Point, y: Point) -> Tangent:
        self._require_point(x)
        self._require_point(y)
        if not self.has_exp:
            raise UnsupportedOperation("a product factor lacks the logarithm map")
        return Tangent(x, self._map_pieces("log", x, y))

    def transport(self, src: Point, dst: Point, u: Tangent) -> Tangent:
        self._require_rooted(src, u)
        self._require_point(dst)
        parts = []
        for i, f in enumerate(self.factors):
            lo, hi = self._offsets[i], self._offsets[i + 1]
            sp = Point(f, src.data[lo:hi])
            dp = Point(f, dst.data[lo:hi])
            parts.append(f.transport(sp, dp, Tangent(sp, u.data[lo:hi])).data)
        return Tangent(dst, np.concatenate(parts))

    def dist(self, x: Point, y: Point) -> float:
        self._require_point(x)
        self._require_point(y)
        total = 0.0
        for i, f in enumerate(self.factors):
            lo, hi = self._offsets[i], self._offsets[i + 1]
            total += f.dist(Point(f, x.data[lo:hi]), Point(f, y.data[lo:hi])) ** 2
        return float(np.sqrt(total))

    def project_tangent(self, x: Point, ambient: np.ndarray) -> Tangent:
        self._require_point(x)
        a = np.asarray(ambient, dtype=np.float64).reshape(-1)
        parts = []
        for i, f in enumerate(self.factors):
            lo, hi = self._offsets[i], self._offsets[i + 1]
            parts.append(f.project_tangent(Point(f, x.data[lo:hi]), a[lo:hi]).data)
        return Tangent(x, np.concatenate(parts))

    def random_point(self, rng: np.random.Generator) -> Point:
        return Point(self, np.concatenate([f.random_point(rng).data for f in self.factors]))

    def _random_tangent_data(self, base: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        parts = []
        for f, b in zip(self.factors, self._slices(base)):
            parts.append(f._random_tangent_data(b, rng))
        return np.concatenate(parts)


@dataclass(frozen=True)
class GeometryReport:
    """Empirical retraction-accuracy constants for one manifold.

    cbar_hat bounds d(x, retract(x,u))^2 / ||u||^2, cr_hat bounds
    ||log(x, retract(x,u)) - u|| / ||u||^2, gap_slope is the fitted log-log
    exponent of that numerator in the step scale t, and dist_sq_slope is the
    fitted exponent of d(x, retract(x, t u))^2 in t. Slopes are NaN when the
    underlying quantity sits at roundoff level (retraction equal to exp).
    """

    manifold: str
    cbar_hat: float
    cr_hat: float
    gap_slope: float
    dist_sq_slope: float
    samples: int


# -- serialization ----------------------------------------------------------
#
# Wire format: a JSON header line {kind, dims, radius[, factors]} terminated
# by a newline, then the flat little-endian float64 payload. Tangents store
# base followed by data, giving a payload of twice the ambient size.


def manifold_to_header(m: Manifold) -> dict:
    if isinstance(m, Euclidean):
        return {"kind": "euclidean", "dims": [m.dim], "radius": None}
    if isinstance(m, Sphere):
        return {"kind": "sphere", "dims": [m.dim], "radius": m.radius}
    if isinstance(m, Stiefel):
        return {"kind": "stiefel", "dims": [m.rows, m.cols], "radius": None}
    if isinstance(m, SPD):
        return {"kind": "spd", "dims": [m.order], "radius": None}
    if isinstance(m, ProductManifold):
        return {
            "kind": "product",
            "dims": [m.ambient_size],
            "radius": None,
            "factors": [manifold_to_header(f) for f in m.factors],
        }
    raise UnsupportedOperation(f"cannot serialize manifold {m!r}")


def manifold_from_header(header: dict) -> Manifold:
    kind = header.get("kind")
    dims = header.get("dims", [])
    if kind == "euclidean":
        return Euclidean(dims[0])
    if kind == "sphere":
        return Sphere(dims[0], header.get("radius") or 1.0)
    if kind == "stiefel":
        return Stiefel(dims[0], dims[1])
    if kind == "spd":
        return SPD(dims[0])
    if kind == "product":
        return ProductManifold([manifold_from_header(h) for h in header["factors"]])
    raise InvalidGeometry(f"unknown manifold kind {kind!r}")


def _pack(header: dict, payload: np.ndarray) -> bytes:
    head = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    return head + np.ascontiguousarray(payload, dtype="<f8").tobytes()


def _unpack(blob: bytes) -> tuple[dict, np.ndarray]:
    nl = blob.index(b"\n")
    header = json.loads(blob[:nl].decode("utf-8"))
    payload = np.frombuffer(blob[nl + 1:], dtype="<f8")
    return header, payload


def serialize_point(p: Point) -> bytes:
    return _pack(manifold_to_header(p.manifold), p.data)


def deserialize_point(blob: bytes) -> Point:
    header, payload = _unpack(blob)
    m = manifold_from_header(header)
    if payload.size != m.ambient_size:
        raise InvalidGeometry(f"payload size {payload.size} != ambient {m.ambient_size}")
    return Point(m, payload)


def serialize_tangent(t: Tangent) -> bytes:
    return _pack(manifold_to_header(t.manifold), np.concatenate([t.base.data, t.data]))


def deserialize_tangent(blob: bytes) -> Tangent:
    header, payload = _unpack(blob)
    m = manifold_from_header(header)
    n = m.ambient_size
    if payload.size != 2 * n:
        raise InvalidGeometry(f"payload size {payload.size} != 2 * ambient {n}")
    base = Point(m, payload[:n])
    return Tangent(base, payload[n:])
