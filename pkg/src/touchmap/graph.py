"""Spatial graph of signed-distance query nodes with incremental Gaussian fusion.

An S^3 lattice of nodes covers the workspace. Every surface measurement
constrains the nodes within an association radius r through a unary Gaussian
potential obtained by conditioning the GP joint of (measurement, node) on the
measurement. Because all potentials are unary and nodes are mutually
unconnected, the global MAP decouples per node and is maintained exactly in
information form:

    Lambda_j = Sigma_b^-1 + sum_f Sigma_f^-1
    eta_j    = Sigma_b^-1 b + sum_f Sigma_f^-1 mu_f

Posterior mean/covariance per node are cached and recomputed lazily for
nodes whose information changed since the last query.
"""
from __future__ import annotations

import gc
import logging
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry.samples import SurfaceSample, samples_to_arrays
from .kernel import (
    GpObservation,
    KernelParams,
    full_gp_posterior,
    kernel_blocks_aligned,
    kernel_blocks_pairwise,
)

log = logging.getLogger(__name__)

COV_EIGENVALUE_FLOOR = 1e-10

_CHECKPOINT_MAGIC = b"GPSG"
_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GridSpec:
    """Query-node lattice: S nodes per axis over an axis-aligned workspace box.

    The association radius is ``radius_fraction`` of the object side length;
    ``object_side`` defaults to the largest horizontal (x/y) extent of the
    workspace box when not given explicitly.
    """

    size: int = 16
    bbox: np.ndarray = field(default_factory=lambda: np.array([[-0.5] * 3, [0.5] * 3]))
    radius_fraction: float = 0.15
    object_side: float | None = None

    def __post_init__(self):
        b = np.array(self.bbox, dtype=np.float64).reshape(2, 3)
        if self.size < 2:
            raise ValueError("grid size must be at least 2")
        if np.any(b[1] <= b[0]):
            raise ValueError("workspace box is degenerate")
        if not 0 < self.radius_fraction < 1:
            raise ValueError("radius_fraction must be in (0, 1)")
        b.setflags(write=False)
        object.__setattr__(self, "bbox", b)

    @property
    def node_count(self) -> int:
        return self.size ** 3

    @property
    def radius(self) -> float:
        side = self.object_side
        if side is None:
            side = float(np.max(self.bbox[1, :2] - self.bbox[0, :2]))
        return self.radius_fraction * side

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.linspace(self.bbox[0, a], self.bbox[1, a], self.size)
                     for a in range(3))

    def node_positions(self) -> np.ndarray:
        """(S^3, 3) lattice positions, C-ordered over (ix, iy, iz)."""
        ax, ay, az = self.axes()
        g = np.meshgrid(ax, ay, az, indexing="ij")
        return np.stack([a.reshape(-1) for a in g], axis=1)

    def nodes_within(self, point: np.ndarray, radius: float) -> np.ndarray:
        """Flat indices of lattice nodes within ``radius`` of ``point``."""
        point = np.asarray(point, dtype=np.float64)
        s = self.size
        spacing = (self.bbox[1] - self.bbox[0]) / (s - 1)
        lo = np.ceil((point - radius - self.bbox[0]) / spacing).astype(np.int64)
        hi = np.floor((point + radius - self.bbox[0]) / spacing).astype(np.int64)
        lo = np.clip(lo, 0, s - 1)
        hi = np.clip(hi, 0, s - 1)
        if np.any(hi < lo):
            return np.zeros(0, dtype=np.int64)
        ii, jj, kk = np.meshgrid(*(np.arange(lo[a], hi[a] + 1) for a in range(3)),
                                 indexing="ij")
        idx = ((ii * s + jj) * s + kk).reshape(-1)
        ax, ay, az = self.axes()
        pos = np.stack([ax[ii.reshape(-1)], ay[jj.reshape(-1)], az[kk.reshape(-1)]], axis=1)
        keep = np.sum((pos - point) ** 2, axis=1) <= radius * radius
        return idx[keep]


@dataclass(frozen=True)
class PriorSpec:
    """Per-node Gaussian prior: mean b (positive SDF value, zero gradient)
    and covariance sigma. Initializes the volume as empty space."""

    b: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        b = np.array(self.b, dtype=np.float64).reshape(4)
        s = np.array(self.sigma, dtype=np.float64).reshape(4, 4)
        if not b[0] > 0:
            raise ValueError("prior SDF value must be positive (empty space)")
        if np.any(np.linalg.eigvalsh(0.5 * (s + s.T)) <= 0):
            raise ValueError("prior covariance must be positive definite")
        b.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "sigma", s)

    @classmethod
    def default_for(cls, params: KernelParams) -> "PriorSpec":
        """One kernel scale of free space, with the kernel's own prior spread."""
        return cls(np.array([params.R, 0.0, 0.0, 0.0]), params.self_block())

    def scaled(self, factor: float) -> "PriorSpec":
        return PriorSpec(self.b, self.sigma * factor)


@dataclass(frozen=True)
class GaussianFactor:
    """Unary potential on one node: the GP conditional given one measurement."""

    node_index: int
    mean: np.ndarray
    cov: np.ndarray
    source: str = "tactile"
    timestep: int = 0


@dataclass
class UpdateReport:
    factors_added: int
    nodes_dirtied: int
    wall_time_ms: float
    dropped_outside: int = 0


@dataclass
class QueryResult:
    indices: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    solves: int


@dataclass
class DivergenceReport:
    """Per-node gap between the graph posterior and the dense GP baseline."""

    max_abs_phi: float
    mean_abs_phi: float
    node_indices: np.ndarray
    phi_diff: np.ndarray


def _conditional_batch(node_pos: np.ndarray, meas_pos: np.ndarray, targets: np.ndarray,
                       sig2: np.ndarray, params: KernelParams):
    """Gaussian conditionals of node states given single measurements.

    node_pos, meas_pos: (m, 3) aligned pairs; targets: (m, 4); sig2: (m,).
    Returns (mu (m,4), cov (m,4,4), cov_inv (m,4,4)) with covariances
    symmetrized and eigenvalue-floored so they stay invertible at the
    self-conditioning limit.
    """
    k_star = kernel_blocks_aligned(node_pos, meas_pos, params)     # (m,4,4)
    d_diag = np.empty((len(node_pos), 4))
    d_diag[:, 0] = params.R ** 3 + sig2
    d_diag[:, 1:] = (6.0 * params.R + sig2)[:, None]
    w = targets / d_diag                                            # (k_ii + s^2 I)^-1 y
    mu = np.einsum("mab,mb->ma", k_star, w)
    reduced = np.einsum("mab,mb,mcb->mac", k_star, 1.0 / d_diag, k_star)
    cov = params.self_block()[None, :, :] - reduced
    cov = 0.5 * (cov + cov.transpose(0, 2, 1))
    evals, evecs = np.linalg.eigh(cov)
    evals = np.maximum(evals, COV_EIGENVALUE_FLOOR)
    cov = np.einsum("mab,mb,mcb->mac", evecs, evals, evecs)
    cov_inv = np.einsum("mab,mb,mcb->mac", evecs, 1.0 / evals, evecs)
    return mu, cov, cov_inv


def make_factor(sample: SurfaceSample, node_position: np.ndarray,
                params: KernelParams, source: str = "tactile",
                timestep: int = 0, node_index: int = -1) -> GaussianFactor:
    """Unary factor for one (measurement, node) pair.

    The caller is responsible for only pairing nodes within the association
    radius of the sample.
    """
    target = np.concatenate([[0.0], sample.normal])
    mu, cov, _ = _conditional_batch(
        np.asarray(node_position, dtype=np.float64)[None, :],
        sample.position[None, :], target[None, :],
        np.array([sample.noise_sigma ** 2]), params)
    return GaussianFactor(node_index, mu[0], cov[0], source, timestep)


class GpsgGraph:
    """Mutable S^3 node lattice with information-form fusion and cached queries."""

    def __init__(self, spec: GridSpec, prior: PriorSpec, params: KernelParams):
        self.spec = spec
        self.prior = prior
        self.params = params
        n = spec.node_count
        self.positions = spec.node_positions()
        sigma_inv = np.linalg.inv(prior.sigma)
        self.eta = np.tile(sigma_inv @ prior.b, (n, 1))
        self.lam = np.tile(sigma_inv, (n, 1, 1))
        self.factor_count = np.zeros(n, dtype=np.int64)
        self.touched = np.zeros(n, dtype=bool)
        self._mean = np.tile(prior.b, (n, 1))
        self._cov = np.tile(prior.sigma, (n, 1, 1))
        self._dirty = np.zeros(n, dtype=bool)
        # measurement log: everything ever fused, for support pruning and replay
        self.log_positions: list[np.ndarray] = []
        self.log_normals: list[np.ndarray] = []
        self.log_sigmas: list[np.ndarray] = []
        self.log_sources: list[str] = []
        self.log_timesteps: list[np.ndarray] = []
        self.step_reports: list[UpdateReport] = []

    # -- update -------------------------------------------------------------

    def add_measurements(self, samples, timestep: int, source: str = "tactile") -> UpdateReport:
        """Fuse unary factors for every (sample, node-within-r) pair.

        Samples outside the workspace box are dropped (counted in the
        report). Returns the update report, also appended to
        ``step_reports``.
        """
        gc_was_on = gc.isenabled()
        gc.disable()
        t0 = time.perf_counter()
        pos, nrm, sig = samples_to_arrays(samples)
        inside = np.all((pos >= self.spec.bbox[0]) & (pos <= self.spec.bbox[1]), axis=1)
        dropped = int(len(pos) - inside.sum())
        if dropped:
            log.debug("dropping %d samples outside the workspace box", dropped)
        pos, nrm, sig = pos[inside], nrm[inside], sig[inside]

        r = self.spec.radius
        node_idx: list[np.ndarray] = []
        samp_idx: list[np.ndarray] = []
        for i, p in enumerate(pos):
            idx = self.spec.nodes_within(p, r)
            if len(idx):
                node_idx.append(idx)
                samp_idx.append(np.full(len(idx), i, dtype=np.int64))
        factors = 0
        dirtied = 0
        if node_idx:
            nodes = np.concatenate(node_idx)
            srcs = np.concatenate(samp_idx)
            targets = np.concatenate([np.zeros((len(srcs), 1)), nrm[srcs]], axis=1)
            mu, _, cov_inv = _conditional_batch(
                self.positions[nodes], pos[srcs], targets, sig[srcs] ** 2, self.params)
            eta_add = np.einsum("mab,mb->ma", cov_inv, mu)
            n_nodes = self.spec.node_count
            for c in range(4):
                self.eta[:, c] += np.bincount(nodes, weights=eta_add[:, c],
                                              minlength=n_nodes)
                for cc in range(4):
                    self.lam[:, c, cc] += np.bincount(nodes, weights=cov_inv[:, c, cc],
                                                      minlength=n_nodes)
            self.factor_count += np.bincount(nodes, minlength=n_nodes).astype(np.int64)
            self.touched[nodes] = True
            newly = np.unique(nodes)
            dirtied = len(newly)
            self._dirty[newly] = True
            factors = len(nodes)

        if len(pos):
            self.log_positions.append(pos)
            self.log_normals.append(nrm)
            self.log_sigmas.append(sig)
            self.log_sources.append(source)
            self.log_timesteps.append(np.full(len(pos), timestep, dtype=np.int64))

        wall_ms = (time.perf_counter() - t0) * 1e3
        if gc_was_on:
            gc.enable()
        report = UpdateReport(factors, dirtied, wall_ms, dropped)
        self.step_reports.append(report)
        return report

    # -- query --------------------------------------------------------------

    def query(self, selection: str = "all") -> QueryResult:
        """Posterior mean/covariance per node.

        Only nodes whose information changed since the last query are
        re-solved (one 4x4 SPD solve each); everything else is served from
        cache. ``selection`` picks the returned rows: "all" nodes, or only
        the "dirty" ones that were just refreshed.
        """
        dirty = np.flatnonzero(self._dirty)
        if len(dirty):
            lam_d = self.lam[dirty]
            self._cov[dirty] = cov = np.linalg.inv(lam_d)
            self._cov[dirty] = 0.5 * (cov + cov.transpose(0, 2, 1))
            self._mean[dirty] = np.linalg.solve(lam_d, self.eta[dirty][..., None])[..., 0]
            self._dirty[dirty] = False
        if selection == "all":
            idx = np.arange(self.spec.node_count)
        elif selection == "dirty":
            idx = dirty
        else:
            raise ValueError(f"unknown selection {selection!r}")
        return QueryResult(idx, self._mean[idx], self._cov[idx], len(dirty))

    # -- bookkeeping --------------------------------------------------------

    def measurement_positions(self) -> np.ndarray:
        if not self.log_positions:
            return np.zeros((0, 3))
        return np.concatenate(self.log_positions)

    def measurement_count(self) -> int:
        return sum(len(p) for p in self.log_positions)

    def logged_samples(self) -> list[GpObservation]:
        obs = []
        for pos, nrm, sig in zip(self.log_positions, self.log_normals, self.log_sigmas):
            for p, n, s in zip(pos, nrm, sig):
                obs.append(GpObservation(p, np.concatenate([[0.0], n]), float(s)))
        return obs

    # -- checkpointing ------------------------------------------------------

    def save_checkpoint(self, path) -> None:
        """Binary snapshot of the node states (little-endian, versioned)."""
        with open(path, "wb") as fh:
            fh.write(_CHECKPOINT_MAGIC)
            fh.write(struct.pack("<II", _CHECKPOINT_VERSION, self.spec.size))
            fh.write(np.asarray(self.spec.bbox, dtype="<f8").tobytes())
            fh.write(struct.pack("<dd", self.spec.radius_fraction,
                                 -1.0 if self.spec.object_side is None else self.spec.object_side))
            fh.write(np.asarray(self.prior.b, dtype="<f8").tobytes())
            fh.write(np.asarray(self.prior.sigma, dtype="<f8").tobytes())
            fh.write(struct.pack("<dd", self.params.R, self.params.sigma_n_default))
            fh.write(self.eta.astype("<f8").tobytes())
            fh.write(self.lam.astype("<f8").tobytes())
            fh.write(self.factor_count.astype("<i8").tobytes())
            fh.write(self.touched.astype("u1").tobytes())

    @classmethod
    def load_checkpoint(cls, path) -> "GpsgGraph":
        with open(path, "rb") as fh:
            if fh.read(4) != _CHECKPOINT_MAGIC:
                raise ValueError("not a graph checkpoint file")
            version, size = struct.unpack("<II", fh.read(8))
            if version != _CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {version}")
            bbox = np.frombuffer(fh.read(48), dtype="<f8").reshape(2, 3)
            radius_fraction, side = struct.unpack("<dd", fh.read(16))
            b = np.frombuffer(fh.read(32), dtype="<f8")
            sigma = np.frombuffer(fh.read(128), dtype="<f8").reshape(4, 4)
            R, sigma_n = struct.unpack("<dd", fh.read(16))
            spec = GridSpec(size, bbox, radius_fraction, None if side < 0 else side)
            graph = cls(spec, PriorSpec(b, sigma), KernelParams(R, sigma_n))
            n = spec.node_count
            graph.eta = np.frombuffer(fh.read(n * 32), dtype="<f8").reshape(n, 4).copy()
            graph.lam = np.frombuffer(fh.read(n * 128), dtype="<f8").reshape(n, 4, 4).copy()
            graph.factor_count = np.frombuffer(fh.read(n * 8), dtype="<i8").copy()
            graph.touched = np.frombuffer(fh.read(n), dtype="u1").astype(bool)
            graph._dirty[:] = True
            graph.query()
        return graph


def init_graph(spec: GridSpec, prior: PriorSpec, params: KernelParams) -> GpsgGraph:
    """Fresh graph with the empty-space prior installed at every node."""
    return GpsgGraph(spec, prior, params)


def compare_to_full_gp(graph: GpsgGraph, observations=None,
                       node_indices: np.ndarray | None = None,
                       max_observations: int = 2000) -> DivergenceReport:
    """Gap between the graph posterior and a dense GP on the same data.

    Runs the dense baseline over the graph's measurement log (or an explicit
    observation list) and reports the SDF-value discrepancy at the selected
    nodes; by default only nodes supported by at least one factor are
    compared, so with no measurements the report is trivially zero.
    """
    if observations is None:
        observations = graph.logged_samples()
    if node_indices is None:
        node_indices = np.flatnonzero(graph.touched)
    node_indices = np.asarray(node_indices, dtype=np.int64)
    result = graph.query()
    if not len(node_indices):
        return DivergenceReport(0.0, 0.0, node_indices, np.zeros(0))
    means, _ = full_gp_posterior(observations, graph.positions[node_indices],
                                 graph.params, max_observations=max_observations,
                                 want_cov=False)
    diff = result.means[node_indices, 0] - means[:, 0]
    return DivergenceReport(float(np.max(np.abs(diff))), float(np.mean(np.abs(diff))),
                            node_indices, diff)
