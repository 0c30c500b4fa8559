"""Joint exceedance probabilities and inner/outer excursion sets from a Monte Carlo ensemble.

Locations are the network vertices carried by the ensemble. Neighbourhoods
are closed Euclidean balls around a centre point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.neighbors import KDTree

from flowcov.core.errors import ValidationError
from flowcov.core.types import ExcursionResult, FieldEnsemble

logger = logging.getLogger(__name__)

FREQ_TOL = 1e-12


@dataclass
class JointExceedance:
    radii: np.ndarray
    p_union: np.ndarray
    p_intersection: np.ndarray
    sizes: np.ndarray  # vertices in each neighbourhood


def neighbourhoods(coords: np.ndarray, center: tuple[float, float], radii: list[float]) -> list[np.ndarray]:
    """Vertex indices within distance r of center, one array per radius; r = 0 gives the nearest vertex."""
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    if coords.shape[0] == 0:
        raise ValidationError('no vertices to search')
    tree = KDTree(coords)
    point = np.asarray(center, dtype=float).reshape(1, 2)
    out = []
    for r in radii:
        if r < 0:
            raise ValidationError(f'radius must be >= 0, got {r}')
        if r == 0:
            _dist, idx = tree.query(point, k=1)
            out.append(np.asarray(idx[0], dtype=np.int64))
            continue
        idx = np.sort(tree.query_radius(point, r=r)[0]).astype(np.int64)
        if idx.size == 0:
            raise ValidationError(f'empty neighbourhood: no vertex within {r} of {tuple(center)}')
        out.append(idx)
    return out


def joint_exceedance(
    ens: FieldEnsemble,
    coords: np.ndarray,
    center: tuple[float, float],
    radii: list[float],
    t: float,
) -> JointExceedance:
    """Frequency of at least one / every vertex in D(r) exceeding t, per radius."""
    exceed = ens.values > t
    union, inter, sizes = [], [], []
    for idx in neighbourhoods(coords, center, radii):
        block = exceed[:, idx]
        union.append(float(np.mean(block.any(axis=1))))
        inter.append(float(np.mean(block.all(axis=1))))
        sizes.append(idx.size)
    return JointExceedance(
        radii=np.asarray(radii, dtype=float),
        p_union=np.asarray(union),
        p_intersection=np.asarray(inter),
        sizes=np.asarray(sizes, dtype=np.int64),
    )


def excursion_sets(ens: FieldEnsemble, t: float, alpha: float) -> ExcursionResult:
    """Greedy inner and outer sets at credibility 1 - alpha.

    inner: longest prefix of vertices ordered by descending marginal
    exceedance that exceeds t jointly with frequency >= 1 - alpha.
    outer: complement of the longest prefix ordered by ascending marginal
    exceedance that stays below t jointly with frequency >= 1 - alpha.
    """
    if not 0 < alpha < 1:
        raise ValidationError(f'alpha must lie in (0, 1), got {alpha}')
    if ens.M * alpha < 1 - FREQ_TOL:
        raise ValidationError(f'ensemble of {ens.M} realisations is too small for alpha={alpha} (needs M >= 1/alpha)')

    exceed = ens.values > t
    marginal = exceed.mean(axis=0)
    level = 1.0 - alpha - FREQ_TOL

    down = np.argsort(-marginal, kind='stable')
    joint = np.logical_and.accumulate(exceed[:, down], axis=1).mean(axis=0)
    inner = down[: int(np.sum(joint >= level))]

    up = np.argsort(marginal, kind='stable')
    below = np.logical_and.accumulate(~exceed[:, up], axis=1).mean(axis=0)
    excluded = up[: int(np.sum(below >= level))]
    outer = np.setdiff1d(np.arange(ens.n), excluded)

    inner_cov = float(np.mean(exceed[:, inner].all(axis=1))) if inner.size else 1.0
    outside = np.setdiff1d(np.arange(ens.n), outer)
    outer_cov = float(np.mean(~exceed[:, outside].any(axis=1))) if outside.size else 1.0
    logger.debug('t=%g alpha=%g: |inner|=%d |outer|=%d', t, alpha, inner.size, outer.size)
    return ExcursionResult(
        threshold=float(t),
        alpha=float(alpha),
        inner_set=sorted(int(v) for v in inner),
        outer_set=sorted(int(v) for v in outer),
        marginal_probs=marginal,
        inner_coverage=inner_cov,
        outer_coverage=outer_cov,
    )
