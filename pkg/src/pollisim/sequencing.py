"""Visit-order planning over approved cluster positions.

Tours are closed loops over 3D sites, fixed to start at site 0 (the
staging point). The solver is deterministic: nearest-neighbor
construction, then first-improvement 2-opt and Or-opt passes under a
shared move budget of 10 n^2. An exact enumerator covers up to 10 sites
for verification and small missions.
"""

from __future__ import annotations

import itertools

import numpy as np

BRUTE_FORCE_MAX_SITES = 10


def distance_matrix(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def tour_length(points, order) -> float:
    """Closed-loop length: consecutive legs plus the return to start."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    order = list(order)
    if sorted(order) != list(range(len(pts))):
        raise ValueError("order must be a permutation of all sites")
    if len(order) < 2:
        return 0.0
    idx = np.asarray(order)
    legs = pts[idx] - pts[np.roll(idx, -1)]
    return float(np.sqrt(np.einsum("ij,ij->i", legs, legs)).sum())


def _nearest_neighbor(D: np.ndarray) -> list:
    n = D.shape[0]
    unvisited = set(range(1, n))
    order = [0]
    while unvisited:
        last = order[-1]
        # argmin with lowest-index tie break: iterate in sorted order
        best = min(unvisited, key=lambda j: (D[last, j], j))
        order.append(best)
        unvisited.remove(best)
    return order


def _two_opt_pass(D, order, budget):
    """First improving segment reversal, repeated until none or budget out."""
    n = len(order)
    improved = True
    while improved and budget > 0:
        improved = False
        for i in range(1, n - 1):
            a, b = order[i - 1], order[i]
            for j in range(i + 1, n):
                c, d = order[j], order[(j + 1) % n]
                if a == c or b == d:
                    continue
                delta = D[a, c] + D[b, d] - D[a, b] - D[c, d]
                if delta < -1e-12:
                    order[i:j + 1] = order[i:j + 1][::-1]
                    budget -= 1
                    improved = True
                    break
            if improved:
                break
    return order, budget


def _or_opt_pass(D, order, budget):
    """Relocate short segments (lengths 1..3), first improvement."""
    n = len(order)
    improved = True
    while improved and budget > 0:
        improved = False
        for seg_len in (1, 2, 3):
            if seg_len >= n - 1:
                continue
            for i in range(1, n - seg_len + 1):
                before = order[i - 1]
                after = order[(i + seg_len) % n]
                s0, s1 = order[i], order[i + seg_len - 1]
                removal = (D[before, s0] + D[s1, after] - D[before, after])
                rest = order[:i] + order[i + seg_len:]
                seg = order[i:i + seg_len]
                for k in range(1, len(rest) + 1):
                    if k == i:
                        continue  # same slot, no move
                    u = rest[k - 1]
                    v = rest[k % len(rest)]
                    insertion = D[u, s0] + D[s1, v] - D[u, v]
                    if insertion - removal < -1e-12:
                        order = rest[:k] + seg + rest[k:]
                        budget -= 1
                        improved = True
                        break
                if improved:
                    break
            if improved:
                break
    return order, budget


def solve_tour(points) -> list:
    """Deterministic heuristic tour starting at site 0.

    Construction is nearest-neighbor; improvement alternates 2-opt and
    Or-opt until neither finds a move or the 10 n^2 budget runs out. No
    randomness anywhere, so equal inputs give equal tours.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        return []
    if n <= 2:
        return list(range(n))
    D = distance_matrix(pts)
    order = _nearest_neighbor(D)
    budget = 10 * n * n
    while budget > 0:
        order, b1 = _two_opt_pass(D, order, budget)
        order, b2 = _or_opt_pass(D, order, b1)
        if b2 == budget:
            break  # neither pass moved anything
        budget = b2
    # canonical rotation: tours are closed, so re-anchor at site 0
    k = order.index(0)
    return order[k:] + order[:k]


def brute_force_tour(points) -> list:
    """Exact shortest closed tour for up to 10 sites.

    Enumerates every permutation with site 0 fixed first, scoring them
    in one vectorized pass. Among equal-length optima the
    lexicographically smallest order wins, so the result is unique.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n > BRUTE_FORCE_MAX_SITES:
        raise ValueError(f"brute force capped at {BRUTE_FORCE_MAX_SITES} sites, got {n}")
    if n == 0:
        return []
    if n <= 2:
        return list(range(n))
    D = distance_matrix(pts)
    perms = np.array(list(itertools.permutations(range(1, n))), dtype=np.intp)
    tours = np.concatenate([np.zeros((len(perms), 1), dtype=np.intp), perms], axis=1)
    legs = D[tours, np.roll(tours, -1, axis=1)]
    lengths = legs.sum(axis=1)
    best = lengths.min()
    # itertools emits permutations in lexicographic order; the first
    # optimum under a tiny float tolerance is the canonical one
    winners = np.nonzero(lengths <= best + 1e-12)[0]
    return tours[winners[0]].tolist()
