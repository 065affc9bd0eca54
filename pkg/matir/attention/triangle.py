"""
Triangular window geometry.

Each w x w tile with local coordinates (r, c) splits along its anti-diagonal
into LOWER = {r + c < w} (w(w+1)/2 pixels) and UPPER = {r + c >= w}
(w(w-1)/2 pixels). Inside a group every pixel i keeps its k nearest group
members as N(i) (Euclidean distance, ties by row-major index). For each
neighbour j the window also records N(j), the edges e_ij, e_ik and the angle
at i between them for k in N(j).
"""
import logging
import threading
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from matir.errors import ContractError

logger = logging.getLogger(__name__)

Position = Tuple[int, int]


def edge_angle(e1: np.ndarray, e2: np.ndarray) -> float:
    """Angle in [0, pi] between two edge vectors; 0 when either has zero length."""
    n1 = float(np.hypot(*e1))
    n2 = float(np.hypot(*e2))
    if n1 == 0.0 or n2 == 0.0:
        return 0.0
    cos = float(np.dot(e1, e2)) / (n1 * n2)
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


@dataclass(frozen=True)
class TriangleWindow:
    """Neighbourhood of one centre pixel, with its geometric features."""
    center: int
    position: Position
    neighbors: Tuple[int, ...]
    edges: np.ndarray          # [k x 2]   e_ij = pos(j) - pos(i)
    hop_neighbors: np.ndarray  # [k x k]   N(j) for each j in N(i)
    hop_edges: np.ndarray      # [k x k x 2] e_ik for k in N(j)
    angles: np.ndarray         # [k x k]   angle at i between e_ij and e_ik

    @property
    def k(self) -> int:
        return len(self.neighbors)


def triangle_groups(height: int, width: int, window: int) -> List[List[int]]:
    """Row-major pixel indices of every triangle group, tile by tile (LOWER first)."""
    if window < 2:
        raise ContractError(f"triangle window size must be >= 2, got {window}")
    if height % window or width % window:
        raise ContractError(
            f"grid {height}x{width} is not a multiple of window {window}; pad the input first"
        )
    groups = []
    for ti in range(0, height, window):
        for tj in range(0, width, window):
            lower, upper = [], []
            for r in range(window):
                for c in range(window):
                    idx = (ti + r) * width + (tj + c)
                    (lower if r + c < window else upper).append(idx)
            groups.extend([lower, upper])
    return groups


def max_neighbors(window: int) -> int:
    """Largest k every group of a w-tile supports (smallest group minus the centre)."""
    return window * (window - 1) // 2 - 1


def _nearest(member: int, group: Sequence[int], coords: np.ndarray, k: int) -> Tuple[int, ...]:
    others = np.array([g for g in group if g != member], dtype=np.int64)
    d2 = np.sum((coords[others] - coords[member]) ** 2, axis=1)
    order = np.lexsort((others, d2))
    return tuple(int(o) for o in others[order[:k]])


def windows_from_neighbors(positions: Sequence[Position], neighbors: Sequence[Sequence[int]]) -> List[TriangleWindow]:
    """
    Build windows for an arbitrary neighbour table.

    Args:
        positions: (row, col) of each pixel, indexed by pixel id
        neighbors: N(i) for each pixel id, all of equal length k
    """
    coords = np.asarray(positions, dtype=np.int64).reshape(-1, 2)
    table = [tuple(int(j) for j in nb) for nb in neighbors]
    sizes = {len(nb) for nb in table}
    if len(sizes) > 1:
        raise ContractError(f"all neighbourhoods must have the same size, got sizes {sorted(sizes)}")
    k = sizes.pop() if sizes else 0
    windows = []
    for i, nb in enumerate(table):
        edges = coords[list(nb)] - coords[i] if k else np.zeros((0, 2), dtype=np.int64)
        hop = np.array([table[j] for j in nb], dtype=np.int64).reshape(k, k)
        hop_edges = coords[hop] - coords[i] if k else np.zeros((0, 0, 2), dtype=np.int64)
        angles = np.zeros((k, k))
        for a in range(k):
            for b in range(k):
                angles[a, b] = edge_angle(edges[a], hop_edges[a, b])
        windows.append(TriangleWindow(
            center=i,
            position=(int(coords[i, 0]), int(coords[i, 1])),
            neighbors=nb,
            edges=edges,
            hop_neighbors=hop,
            hop_edges=hop_edges,
            angles=angles,
        ))
    return windows


def build_triangle_windows(height: int, width: int, window: int, k: int) -> List[TriangleWindow]:
    """
    Windows for every pixel of an H x W grid, ordered by centre index.

    Raises:
        ContractError if the grid is not tiled by the window, or k exceeds the
        smallest triangle group minus one
    """
    limit = max_neighbors(window)
    if k < 1 or k > limit:
        raise ContractError(
            f"neighbor count k={k} out of range: a {window}x{window} tile allows 1 <= k <= {limit}"
        )
    groups = triangle_groups(height, width, window)
    coords = np.array([(p // width, p % width) for p in range(height * width)], dtype=np.int64)
    table: List[Tuple[int, ...]] = [()] * (height * width)
    for group in groups:
        for member in group:
            table[member] = _nearest(member, group, coords, k)
    return windows_from_neighbors([tuple(c) for c in coords], table)


@dataclass(frozen=True)
class TriangleGeometry:
    """Window list packed into arrays indexed by centre pixel."""
    neighbors: np.ndarray    # [N x k]
    edges: np.ndarray        # [N x k x 2]
    hop_edges: np.ndarray    # [N x k x k x 2]
    angles: np.ndarray       # [N x k x k]

    @property
    def num_pixels(self) -> int:
        return int(self.neighbors.shape[0])

    @property
    def k(self) -> int:
        return int(self.neighbors.shape[1])

    def triple_features(self) -> np.ndarray:
        """(e_ij, e_ik, theta_ijk) per triple: [N x k x k x 5]."""
        e_ij = np.broadcast_to(self.edges[:, :, None, :], self.hop_edges.shape)
        return np.concatenate(
            [e_ij, self.hop_edges, self.angles[..., None]], axis=-1
        ).astype(np.float64)

    @classmethod
    def from_windows(cls, windows: Sequence[TriangleWindow]) -> "TriangleGeometry":
        """
        Raises:
            ContractError unless every pixel is the centre of exactly one window
        """
        centers = sorted(w.center for w in windows)
        if centers != list(range(len(windows))):
            raise ContractError("windows must cover every pixel exactly once as a centre")
        ordered = sorted(windows, key=lambda w: w.center)
        return cls(
            neighbors=np.array([w.neighbors for w in ordered], dtype=np.int64).reshape(len(ordered), -1),
            edges=np.stack([w.edges for w in ordered]).astype(np.float64),
            hop_edges=np.stack([w.hop_edges for w in ordered]).astype(np.float64),
            angles=np.stack([w.angles for w in ordered]),
        )


class GeometryRegistry:
    """Process-wide cache of immutable geometry per (H, W, w, k)."""

    _geometries: Dict[Tuple[int, int, int, int], TriangleGeometry] = {}
    _lock = threading.Lock()

    @classmethod
    def get(cls, height: int, width: int, window: int, k: int) -> TriangleGeometry:
        key = (height, width, window, k)
        with cls._lock:
            geometry = cls._geometries.get(key)
        if geometry is not None:
            return geometry
        geometry = TriangleGeometry.from_windows(build_triangle_windows(height, width, window, k))
        with cls._lock:
            geometry = cls._geometries.setdefault(key, geometry)
        logger.debug(f"Cached triangle geometry for {key}")
        return geometry

    @classmethod
    def clear(cls) -> None:
        with cls._lock:
            cls._geometries.clear()
