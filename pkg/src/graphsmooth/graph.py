"""Graphs, Laplacians, spectra and graph-dimension estimation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    DegenerateSpectrumError,
    GenerationError,
    InsufficientDataError,
    InvalidGraphError,
    NumericalError,
    ValidationError,
)

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088
MAX_GENERATION_ATTEMPTS = 100
GRAPH_KINDS = ("weighted_threshold", "erdos_renyi", "cluster", "geometric_distance")


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph stored as a dense symmetric adjacency matrix."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] == 0:
            raise InvalidGraphError(f"adjacency must be a non-empty square matrix, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InvalidGraphError("adjacency contains non-finite weights")
        if np.any(w < 0):
            raise InvalidGraphError("adjacency contains negative weights")
        if not np.array_equal(w, w.T):
            raise InvalidGraphError("adjacency is not symmetric")
        if np.any(np.diag(w) != 0):
            raise InvalidGraphError("adjacency has non-zero diagonal (self loops)")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, 1)))

    @property
    def density(self) -> float:
        """Fraction of unordered node pairs joined by an edge."""
        pairs = self.n * (self.n - 1) // 2
        return self.n_edges / pairs if pairs else 0.0

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        n_comp, _ = connected_components(self.weights > 0, directed=False)
        return n_comp == 1

    def edge_list(self):
        """Return ``(i, j, weight)`` triples with ``i < j``."""
        i, j = np.nonzero(np.triu(self.weights, 1))
        return list(zip(i.tolist(), j.tolist(), self.weights[i, j].tolist()))

    @classmethod
    def from_edges(cls, edges, n: int | None = None) -> "Graph":
        edges = list(edges)
        if n is None:
            n = 1 + max((max(int(i), int(j)) for i, j, _ in edges), default=-1)
        w = np.zeros((n, n))
        for i, j, wt in edges:
            i, j = int(i), int(j)
            if i == j:
                raise InvalidGraphError(f"self loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidGraphError(f"edge ({i}, {j}) outside node range 0..{n - 1}")
            w[i, j] = w[j, i] = float(wt)
        return cls(w)


@dataclass(frozen=True)
class Spectrum:
    """Ascending Laplacian eigenvalues with orthonormal eigenvectors as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        E = self.eigenvectors
        return (E * self.eigenvalues) @ E.T


@dataclass(frozen=True)
class DimensionFit:
    """Result of regressing log eigenvalues on log relative index."""

    r: float
    slope: float
    intercept: float
    residual: float
    fit_range: tuple[int, int]

    @property
    def below_one(self) -> bool:
        # r < 1 cannot happen for a connected graph; flag it rather than clamp
        return self.r < 1.0

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "slope": self.slope,
            "residual": self.residual,
            "fit_range": list(self.fit_range),
        }


def build_laplacian(g: Graph) -> np.ndarray:
    """Combinatorial Laplacian ``L = D - W`` with ``D`` the weighted degrees."""
    if not isinstance(g, Graph):
        g = Graph(g)
    W = g.weights
    return np.diag(W.sum(axis=1)) - W


def _fix_signs(E: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    E = E.copy()
    for k in range(E.shape[1]):
        col = E[:, k]
        nz = np.flatnonzero(np.abs(col) > tol)
        if nz.size and col[nz[0]] < 0:
            E[:, k] = -col
    return E


def spectral_decompose(L: np.ndarray) -> Spectrum:
    """Symmetric eigendecomposition with a reproducible sign convention.

    Each eigenvector is flipped so that its first non-negligible coordinate
    is positive.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {L.shape}")
    if not np.all(np.isfinite(L)):
        raise ValidationError("matrix contains non-finite entries")
    if np.max(np.abs(L - L.T), initial=0.0) > 1e-10:
        raise ValidationError("matrix is not symmetric to 1e-10")
    L = 0.5 * (L + L.T)
    try:
        lam, E = np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigendecomposition failed for {L.shape[0]}x{L.shape[0]} matrix "
            f"(max |entry| = {np.max(np.abs(L)):.3g}): {exc}"
        ) from exc
    order = np.argsort(lam, kind="stable")
    lam, E = lam[order], E[:, order]
    E = _fix_signs(E)
    lam.setflags(write=False)
    E.setflags(write=False)
    return Spectrum(lam, E)


def graph_spectrum(g: Graph) -> Spectrum:
    return spectral_decompose(build_laplacian(g))


def _counting_ranks(vals: np.ndarray, idx: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Replace the index of each group of tied eigenvalues by the group's last index."""
    ranks = idx.astype(float)
    k = 0
    while k < vals.size:
        m = k
        while m + 1 < vals.size and abs(vals[m + 1] - vals[k]) <= rtol * max(1.0, abs(vals[k])):
            m += 1
        ranks[k : m + 1] = idx[m]
        k = m + 1
    return ranks


def estimate_dimension(s: Spectrum, fit_fraction: float = 0.5, ties: str = "count") -> DimensionFit:
    """Estimate the graph dimension from the eigenvalue growth rate.

    Fits ``log lambda_i = a + slope * log(i / n)`` by least squares over
    ``i = 1 .. floor(fit_fraction * n)`` and returns ``r = 2 / slope``.

    Parameters
    ----------
    ties : {"count", "index"}
        With ``"count"`` a group of repeated eigenvalues is placed at the
        eigenvalue counting function, i.e. every member gets the group's
        largest index. ``"index"`` uses the raw sorted position, which
        depends on an arbitrary ordering inside each group.
    """
    if not 0 < fit_fraction <= 1:
        raise ValidationError("fit_fraction must lie in (0, 1]")
    if ties not in ("count", "index"):
        raise ValidationError(f"ties must be 'count' or 'index', got {ties!r}")
    lam = np.asarray(s.eigenvalues, dtype=float)
    n = lam.shape[0]
    if n < 8:
        raise InsufficientDataError(f"dimension fit needs n >= 8 nodes, got {n}")
    hi = int(math.floor(fit_fraction * n))
    idx = np.arange(1, min(hi, n - 1) + 1)
    vals = lam[idx]
    usable = vals > 0
    idx, vals = idx[usable], vals[usable]
    if idx.size < 4:
        raise InsufficientDataError(f"only {idx.size} positive eigenvalues in the fit range")
    rank = idx.astype(float)
    if ties == "count":
        # a tie group cut by the fit window still counts all its members
        full = np.arange(1, n)
        grp = _counting_ranks(lam[1:], full)
        rank = grp[idx - 1]
    if np.unique(rank).size < 2:
        raise DegenerateSpectrumError("all eigenvalues in the fit range coincide")
    x = np.log(rank / n)
    y = np.log(vals)
    slope, intercept = np.polyfit(x, y, 1)
    if slope <= 0:
        raise DegenerateSpectrumError(f"non-positive eigenvalue growth slope {slope:.4g}")
    resid = y - (intercept + slope * x)
    fit = DimensionFit(
        r=float(2.0 / slope),
        slope=float(slope),
        intercept=float(intercept),
        residual=float(np.sqrt(np.mean(resid**2))),
        fit_range=(int(idx[0]), int(idx[-1])),
    )
    if fit.below_one:
        logger.warning("estimated graph dimension r=%.3f is below 1", fit.r)
    return fit


# --------------------------------------------------------------------------
# geography


def haversine_matrix(lat, lon) -> np.ndarray:
    """Pairwise great-circle distances in kilometres."""
    lat = np.radians(np.asarray(lat, dtype=float))
    lon = np.radians(np.asarray(lon, dtype=float))
    dlat = lat[:, None] - lat[None, :]
    dlon = lon[:, None] - lon[None, :]
    h = np.sin(dlat / 2) ** 2 + np.cos(lat[:, None]) * np.cos(lat[None, :]) * np.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def distance_graph(lat, lon, percentile: float = 70.0) -> Graph:
    """Inverse-distance graph ``w_ij = 10 / d_ij`` thresholded at a weight percentile.

    Pairs whose weight falls below the ``percentile``-th percentile of all
    pairwise weights are dropped, so ``percentile=70`` keeps the closest 30%
    of pairs.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    n = lat.shape[0]
    if n < 3:
        raise ValidationError("need at least 3 stations")
    if not 0 <= percentile <= 100:
        raise ValidationError("percentile must lie in [0, 100]")
    d = haversine_matrix(lat, lon)
    iu = np.triu_indices(n, 1)
    if np.any(d[iu] <= 0):
        raise ValidationError("duplicate station coordinates (zero distance)")
    w = np.zeros((n, n))
    w[iu] = 10.0 / d[iu]
    cut = np.percentile(w[iu], percentile)
    keep = w[iu] >= cut * (1 - 1e-12)
    w[iu[0][~keep], iu[1][~keep]] = 0.0
    w = w + w.T
    return Graph(w)


def ingest_geographic(lat, lon, percentile: float = 70.0) -> Graph:
    g = distance_graph(lat, lon, percentile)
    if not g.is_connected():
        raise ValidationError(
            f"distance graph is disconnected at percentile {percentile}; "
            "use a lower percentile to keep more edges"
        )
    return g


# NC-like bounding box (lat, lon) for the synthetic station cloud
_NC_BOX = ((33.9, 36.5), (-84.3, -75.5))


def synthetic_stations(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    (lat0, lat1), (lon0, lon1) = _NC_BOX
    return rng.uniform(lat0, lat1, n), rng.uniform(lon0, lon1, n)


# --------------------------------------------------------------------------
# generators


def _weighted_threshold(rng, n, threshold=0.8):
    u = rng.uniform(0.0, 1.0, size=(n, n))
    w = np.triu(u, 1)
    w[w < threshold] = 0.0
    return w + w.T


def _erdos_renyi(rng, n, p=0.2):
    a = np.triu(rng.uniform(size=(n, n)) < p, 1).astype(float)
    return a + a.T


def _cluster(rng, n, n_clusters=3, p_in=0.3, p_out=0.02):
    labels = np.repeat(np.arange(n_clusters), -(-n // n_clusters))[:n]
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    a = np.triu(rng.uniform(size=(n, n)) < prob, 1).astype(float)
    return a + a.T


def generate_graph(kind: str, params: dict | None = None, seed: int = 0) -> Graph:
    """Draw a connected random graph.

    Parameters
    ----------
    kind : {"weighted_threshold", "erdos_renyi", "cluster", "geometric_distance"}
    params : dict
        ``n`` for every kind, plus ``threshold`` (weighted_threshold),
        ``p`` (erdos_renyi), ``n_clusters``, ``p_in``, ``p_out`` (cluster) or
        ``lat``/``lon`` and ``percentile`` (geometric_distance; synthetic
        stations are drawn when coordinates are omitted).
    seed : int
        A disconnected draw is retried with ``seed + 1``, ``seed + 2``, ...
    """
    params = dict(params or {})
    if kind not in GRAPH_KINDS:
        raise ValidationError(f"unknown graph kind {kind!r}; expected one of {GRAPH_KINDS}")
    if kind == "geometric_distance" and "lat" in params:
        return ingest_geographic(params["lat"], params["lon"], params.get("percentile", 70.0))
    n = int(params.pop("n", 50))
    if n < 1:
        raise ValidationError("n must be positive")
    for attempt in range(MAX_GENERATION_ATTEMPTS):
        rng = np.random.default_rng(seed + attempt)
        if kind == "weighted_threshold":
            w = _weighted_threshold(rng, n, params.get("threshold", 0.8))
        elif kind == "erdos_renyi":
            w = _erdos_renyi(rng, n, params.get("p", 0.2))
        elif kind == "cluster":
            w = _cluster(
                rng, n, params.get("n_clusters", 3), params.get("p_in", 0.3), params.get("p_out", 0.02)
            )
        else:
            lat, lon = synthetic_stations(n, seed + attempt)
            g = distance_graph(lat, lon, params.get("percentile", 70.0))
            w = g.weights
        g = Graph(w)
        if g.is_connected():
            if attempt:
                logger.debug("%s graph connected after %d redraws", kind, attempt)
            return g
    raise GenerationError(
        f"no connected {kind} graph with n={n} after {MAX_GENERATION_ATTEMPTS} attempts from seed {seed}"
    )
