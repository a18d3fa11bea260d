"""Independent brute-force oracles shared by the tests."""
from __future__ import annotations

import math
from collections import deque

import numpy as np


def all_simple_cycles(open_grid: np.ndarray):
    """Every simple 4-cycle of the open vertices, each reported once as a vertex list."""
    W, H = open_grid.shape
    nodes = [(i, j) for i in range(W) for j in range(H) if open_grid[i, j]]
    order = {p: k for k, p in enumerate(nodes)}
    nbr = [[] for _ in nodes]
    for (i, j), k in order.items():
        for di, dj in ((1, 0), (0, 1), (-1, 0), (0, -1)):
            q = (i + di, j + dj)
            if q in order:
                nbr[k].append(order[q])
    for s in range(len(nodes)):
        # cycles whose smallest node is s
        stack = [(s, 1 << s, [s])]
        while stack:
            v, used, path = stack.pop()
            for u in nbr[v]:
                if u == s and len(path) >= 4 and path[1] < path[-1]:
                    yield [nodes[k] for k in path]
                elif u > s and not used >> u & 1:
                    stack.append((u, used | (1 << u), path + [u]))


def interior_count_and_winds(cycle, centre) -> tuple[int, bool]:
    """Strictly enclosed lattice points (Pick) and whether the cycle winds around ``centre``."""
    n = len(cycle)
    area2 = 0
    crossings = 0
    cx, cy = centre
    for k in range(n):
        x0, y0 = cycle[k]
        x1, y1 = cycle[(k + 1) % n]
        area2 += x0 * y1 - x1 * y0
        # ray to +x from a point offset by a half so it never hits a vertex
        if (y0 > cy) != (y1 > cy) and x0 > cx:
            crossings += 1
    interior = (abs(area2) - n) // 2 + 1
    return interior, crossings % 2 == 1


def _reaches(open_grid, src, dst, used, H) -> bool:
    """Is ``dst`` reachable from ``src`` through open vertices outside the bitmask ``used``?"""
    W = open_grid.shape[0]
    seen = {src}
    dq = deque([src])
    while dq:
        i, j = dq.popleft()
        for di, dj in ((1, 0), (0, 1), (-1, 0), (0, -1)):
            q = (i + di, j + dj)
            if q == dst:
                return True
            if (0 <= q[0] < W and 0 <= q[1] < H and open_grid[q] and q not in seen
                    and not used >> (q[0] * H + q[1]) & 1):
                seen.add(q)
                dq.append(q)
    return False


def surrounding_cycles(open_grid: np.ndarray, centre):
    """Every simple open cycle winding around the point ``centre + (1/2, 1/2)``, each once.

    Such a cycle must use a vertical edge ``(x, cy) - (x, cy + 1)`` with
    ``x > cx``.  It is found, from the smallest such ``x`` it uses, as a
    simple path from ``(x, cy + 1)`` back to ``(x, cy)``.  Branches that can
    no longer close are pruned by a reachability search, so the cost grows
    with the number of cycles rather than the number of open paths.
    """
    W, H = open_grid.shape
    cx, cy = centre
    bit = lambda i, j: 1 << (i * H + j)
    steps = ((1, 0), (0, 1), (-1, 0), (0, -1))
    for x in range(cx + 1, W):
        if not (open_grid[x, cy] and open_grid[x, cy + 1]):
            continue
        a, b = (x, cy + 1), (x, cy)
        # ray edges closer to the centre belong to an earlier start
        banned = {frozenset(((x2, cy), (x2, cy + 1))) for x2 in range(cx + 1, x)}
        stack = [(a, bit(*a), [a])]
        while stack:
            v, used, path = stack.pop()
            for di, dj in steps:
                u = (v[0] + di, v[1] + dj)
                if not (0 <= u[0] < W and 0 <= u[1] < H) or not open_grid[u]:
                    continue
                if frozenset((v, u)) in banned:
                    continue
                if u == b:
                    if v != a:
                        cyc = path + [b]
                        if interior_count_and_winds(cyc, (cx + 0.5, cy + 0.5))[1]:
                            yield cyc
                    continue
                ub = bit(*u)
                if used & ub:
                    continue
                if not _reaches(open_grid, u, b, used | ub | bit(*b), H):
                    continue
                stack.append((u, used | ub, path + [u]))


def cycle_area2(cycle) -> int:
    """Twice the absolute shoelace area of a cycle given as a vertex list."""
    n = len(cycle)
    return abs(sum(cycle[k][0] * cycle[(k + 1) % n][1] - cycle[(k + 1) % n][0] * cycle[k][1] for k in range(n)))


def brute_outermost(open_grid: np.ndarray, centre, cycles=None):
    """Surrounding cycle enclosing the largest planar area.

    Ranking by area rather than by enclosed lattice points matters: a detour
    around a 2x2 block adds area but no lattice point.
    """
    if cycles is None:
        cycles = surrounding_cycles(open_grid, centre)
    best, key = None, None
    for cyc in cycles:
        k = (cycle_area2(cyc), interior_count_and_winds(cyc, (centre[0] + 0.5, centre[1] + 0.5))[0])
        if key is None or k > key:
            best, key = cyc, k
    return best


def flood_enclosed(cycle, shape) -> np.ndarray:
    cyc = np.zeros(shape, dtype=bool)
    for p in cycle:
        cyc[p] = True
    seen = np.zeros((shape[0] + 2, shape[1] + 2), dtype=bool)
    seen[0, 0] = True
    dq = deque([(0, 0)])
    while dq:
        i, j = dq.popleft()
        for di, dj in ((1, 0), (0, 1), (-1, 0), (0, -1)):
            a, b = i + di, j + dj
            if 0 <= a < shape[0] + 2 and 0 <= b < shape[1] + 2 and not seen[a, b]:
                if 1 <= a <= shape[0] and 1 <= b <= shape[1] and cyc[a - 1, b - 1]:
                    continue
                seen[a, b] = True
                dq.append((a, b))
    return ~seen[1:-1, 1:-1] & ~cyc


def floyd_warshall(open_grid: np.ndarray) -> np.ndarray:
    """All-pairs open-path distances (inf if not connected) on a small grid."""
    W, H = open_grid.shape
    n = W * H
    d = np.full((n, n), np.inf)
    for i in range(W):
        for j in range(H):
            if not open_grid[i, j]:
                continue
            a = i * H + j
            d[a, a] = 0
            for di, dj in ((1, 0), (0, 1), (-1, 0), (0, -1)):
                p, q = i + di, j + dj
                if 0 <= p < W and 0 <= q < H and open_grid[p, q]:
                    d[a, p * H + q] = 1
    for k in range(n):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d


def flood_labels(open_grid: np.ndarray) -> np.ndarray:
    """Component labels by BFS, each labelled by its smallest flat index."""
    W, H = open_grid.shape
    out = -np.ones((W, H), dtype=np.int64)
    for i in range(W):
        for j in range(H):
            if open_grid[i, j] and out[i, j] < 0:
                lab = i * H + j
                out[i, j] = lab
                dq = deque([(i, j)])
                while dq:
                    a, b = dq.popleft()
                    for da, db in ((1, 0), (0, 1), (-1, 0), (0, -1)):
                        p, q = a + da, b + db
                        if 0 <= p < W and 0 <= q < H and open_grid[p, q] and out[p, q] < 0:
                            out[p, q] = lab
                            dq.append((p, q))
    return out


def all_simple_paths_cross(open_grid: np.ndarray) -> bool:
    """Exhaustive search over simple open paths from the left column to the right column."""
    W, H = open_grid.shape
    for j in range(H):
        if not open_grid[0, j]:
            continue
        stack = [((0, j), frozenset([(0, j)]))]
        while stack:
            (a, b), seen = stack.pop()
            if a == W - 1:
                return True
            for da, db in ((1, 0), (0, 1), (-1, 0), (0, -1)):
                p, q = a + da, b + db
                if 0 <= p < W and 0 <= q < H and open_grid[p, q] and (p, q) not in seen:
                    stack.append(((p, q), seen | {(p, q)}))
    return False


def planted_annulus_mask(rng: np.random.Generator, base_p: float) -> np.ndarray:
    """Random mask on the 9x9 grid minus its central 5x5, with one open circuit planted.

    The circuit follows the inner lane (the 7x7 ring) and on each side may
    detour through the outer lane over a random stretch.
    """
    region = np.ones((9, 9), dtype=bool)
    region[2:7, 2:7] = False
    g = (rng.random((9, 9)) < base_p) & region
    lane = np.zeros((9, 9), dtype=bool)
    lane[1:8, 1:8] = True
    lane[2:7, 2:7] = False
    g |= lane
    for side in range(4):
        if rng.random() < 0.5:
            s, e = sorted(rng.choice(np.arange(1, 8), size=2, replace=False))
            for t in range(s, e + 1):
                i, j = {0: (t, 0), 1: (8, t), 2: (t, 8), 3: (0, t)}[side]
                g[i, j] = True
            # close part of the inner lane so the detour matters
            t = int(rng.integers(s, e + 1))
            i, j = {0: (t, 1), 1: (7, t), 2: (t, 7), 3: (1, t)}[side]
            if s < t < e:
                g[i, j] = False
    return g


def dense_green(free: np.ndarray) -> tuple[np.ndarray, list]:
    """Green's function on ``free`` by assembling ``I - P`` entry by entry and inverting.

    ``P`` is the transition matrix of simple random walk restricted to
    ``free``, so ``(I - P)^-1`` counts expected visits before leaving.
    Returns the matrix and the list of array positions in row order.
    """
    W, H = free.shape
    pts = [(i, j) for i in range(W) for j in range(H) if free[i, j]]
    pos = {p: k for k, p in enumerate(pts)}
    n = len(pts)
    A = np.eye(n)
    for (i, j), k in pos.items():
        for di, dj in ((1, 0), (0, 1), (-1, 0), (0, -1)):
            q = pos.get((i + di, j + dj))
            if q is not None:
                A[k, q] -= 0.25
    return np.linalg.inv(A), pts


def conditional_mean(values: np.ndarray, G: np.ndarray, pts: list, given: list) -> np.ndarray:
    """Gaussian conditional mean ``G_xA G_AA^-1 v_A`` at every point of ``pts``.

    ``given`` lists the indices (into ``pts``) of the conditioning set.
    """
    v = np.array([values[p] for p in (pts[k] for k in given)])
    GA = G[np.ix_(given, given)]
    return G[:, given] @ np.linalg.solve(GA, v)


def sampled_ellipse_distance(p, f1, f2, major_sum: float, n: int = 200_000) -> float:
    """Distance from ``p`` to the filled ellipse with foci ``f1, f2``, by sampling its boundary."""
    f1, f2, p = (np.asarray(q, dtype=float) for q in (f1, f2, p))
    if np.linalg.norm(p - f1) + np.linalg.norm(p - f2) <= major_sum:
        return 0.0
    c = (f1 + f2) / 2
    a = major_sum / 2
    fc = np.linalg.norm(f2 - f1) / 2
    b = math.sqrt(max(a * a - fc * fc, 0.0))
    u = (f2 - f1) / (2 * fc) if fc > 0 else np.array([1.0, 0.0])
    w = np.array([-u[1], u[0]])
    t = np.linspace(0, 2 * math.pi, n, endpoint=False)
    pts = c + np.outer(a * np.cos(t), u) + np.outer(b * np.sin(t), w)
    return float(np.min(np.linalg.norm(pts - p, axis=1)))


def scale_by_loop(span: float, K: int, jmax: int = 12) -> int | None:
    """The ``j >= 1`` with ``K^j <= span <= (1 + 1/K) K^j`` by direct search."""
    for j in range(1, jmax):
        if K ** j <= span <= (1 + 1 / K) * K ** j:
            return j
    return None


def max_disjoint_scaled_children(vertices: np.ndarray, K: int, jc: int) -> int:
    """Most subpaths in ``SL_jc`` with pairwise disjoint edge ranges, by dynamic programming.

    Every index pair is tested directly against the window and ball
    conditions; tile-visit caps and recursive feasibility are ignored, so the
    result bounds any admissible set of children from above.
    """
    v = [tuple(map(int, p)) for p in vertices]
    n = len(v)
    best = [0] * n  # best[b] = most children ending at or before index b
    for b in range(n):
        best[b] = best[b - 1] if b else 0
        for a in range(b):
            d2 = (v[b][0] - v[a][0]) ** 2 + (v[b][1] - v[a][1]) ** 2
            if not (K ** (2 * jc) <= d2 <= (K ** jc + K ** (jc - 1)) ** 2):
                continue
            if all((v[i][0] - v[a][0]) ** 2 + (v[i][1] - v[a][1]) ** 2 <= d2 for i in range(a, b + 1)):
                best[b] = max(best[b], best[a] + 1)
    return best[-1]


def decomposable(vertices: np.ndarray, K: int) -> bool:
    """Whether a scaled path splits recursively into enough scaled children, ignoring tile caps.

    A node in ``SL_j`` needs ``K`` disjoint children in ``SL_(j-1)`` that are
    themselves decomposable; a node in ``SL_1`` needs ``max(K, ceil(span/2))``
    vertices.  Brute force over all index pairs with memoisation.
    """
    v = [tuple(map(int, p)) for p in vertices]
    memo: dict = {}

    def d2(a, b):
        return (v[b][0] - v[a][0]) ** 2 + (v[b][1] - v[a][1]) ** 2

    def scaled(a, b, j):
        s = d2(a, b)
        if not (K ** (2 * j) <= s <= (K ** j + K ** (j - 1)) ** 2):
            return False
        return all(d2(a, i) <= s for i in range(a, b + 1))

    def ok(a, b, j):
        key = (a, b, j)
        if key in memo:
            return memo[key]
        if j == 1:
            counts: dict = {}
            for p in v[a:b + 1]:
                counts[p] = counts.get(p, 0) + 1
            res = sum(min(c, 12) for c in counts.values()) >= max(K, math.ceil(math.sqrt(d2(a, b)) / 2))
        else:
            best = {a: 0}
            top = 0
            for e in range(a + 1, b + 1):
                cur = best.get(e - 1, 0)
                for s in range(a, e):
                    if scaled(s, e, j - 1) and ok(s, e, j - 1):
                        cur = max(cur, best[s] + 1)
                best[e] = cur
                top = cur
            res = top >= K
        memo[key] = res
        return res

    n = len(v)
    for j in range(1, 12):
        if scaled(0, n - 1, j):
            return ok(0, n - 1, j)
    raise ValueError("path is not in any scale class")
