"""Orbit enumeration of sphere packings and bend counting.

A packing is given as a finite list of base spheres and a group acting on
the right of inversive vectors.  The enumerator runs a breadth-first search
on the orbit graph (edges v -> v g for each generator g), deduplicating
vectors, so the result does not depend on word order.
"""

import bisect
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import List, Optional, Tuple

import numpy as np

from kleinian.quad_space import FLOAT_TOL, standard_form

logger = logging.getLogger(__name__)

DEFAULT_MARGIN = 4.0
FLOAT_GRID = 1e-7
DEFAULT_MAX_NODES = 5_000_000
# smoothed counts sandwich the sharp count once c >= (e^eps - 1) / eps; 2 covers eps < 1/2
SANDWICH_C = 2.0
INT_LIMIT = 2 ** 62


class GroupConfigError(ValueError):
    def __init__(self, msg, line=None):
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)
        self.line = line


class IncompleteCountError(ValueError):
    """The requested bend bound lies beyond the certified horizon."""


class InsufficientDataError(ValueError):
    pass


class FrontierOverflowError(RuntimeError):
    pass


@dataclass
class GroupSpec:
    n: int
    generators: List[np.ndarray]
    base_vectors: List[np.ndarray]
    mode: str = "float"
    bounded: bool = True
    X: Optional[float] = None
    margin: float = DEFAULT_MARGIN
    # integer mode: generator i acts as v -> (v @ int_generators[i]) / denominators[i]
    int_generators: List[np.ndarray] = field(default_factory=list, repr=False)
    denominators: List[int] = field(default_factory=list, repr=False)
    name: str = ""

    @property
    def base_vector(self):
        return self.base_vectors[0]

    @property
    def dim(self):
        return self.n + 2

    def containing_radius(self):
        """Radius R of a ball about the origin holding the packing, from the outer sphere."""
        for v in self.base_vectors:
            b = float(v[0])
            if b < 0:
                return float(np.linalg.norm(np.asarray(v[1:-1], dtype=float)) / -b + 1 / -b)
        return None


@dataclass
class PackingCount:
    bends: List[float]
    horizon: float
    words_explored: int
    complete: bool = True
    vectors: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self):
        return len(self.bends)


@dataclass(frozen=True)
class DeltaFit:
    slope: float
    intercept: float
    r_squared: float
    T_range: Tuple[float, float]
    degenerate: bool = False


@dataclass(frozen=True)
class SmoothedCount:
    value: float
    epsilon: float
    T: float


# --- config ingestion --------------------------------------------------------

def _parse_rational(tok):
    if isinstance(tok, bool):
        raise ValueError(f"not a number: {tok!r}")
    if isinstance(tok, (int, float)):
        return Fraction(tok) if isinstance(tok, int) else tok
    if isinstance(tok, str):
        return Fraction(tok.strip())
    raise ValueError(f"not a number: {tok!r}")


def _locate(text, key, *path):
    """Line number of element ``path`` inside the JSON array stored at ``key``."""
    start = text.find(f'"{key}"')
    if start < 0:
        return None
    fallback = text.count("\n", 0, start) + 1
    pos = text.find("[", start)
    if pos < 0:
        return fallback
    target = list(path)
    stack = []
    in_str = False
    fresh = True
    i = pos
    while i < len(text):
        ch = text[i]
        if in_str:
            if ch == "\\":
                i += 1
            elif ch == '"':
                in_str = False
            i += 1
            continue
        if ch.isspace():
            i += 1
            continue
        if fresh and stack and stack == target:
            return text.count("\n", 0, i) + 1
        fresh = False
        if ch == '"':
            in_str = True
        elif ch == "[":
            stack.append(0)
            fresh = True
        elif ch == "]":
            stack.pop()
            if not stack:
                break
        elif ch == ",":
            stack[-1] += 1
            fresh = True
        i += 1
    return fallback


def _matrix_from(entry, N, text, idx):
    if isinstance(entry, list) and entry and isinstance(entry[0], list):
        rows = entry
        if len(rows) != N:
            raise GroupConfigError(f"generator {idx} has {len(rows)} rows, expected {N}",
                                   _locate(text, "generators", idx))
        flat = []
        for r, row in enumerate(rows):
            if not isinstance(row, list) or len(row) != N:
                raise GroupConfigError(f"generator {idx} row {r} is malformed (expected {N} entries)",
                                       _locate(text, "generators", idx, r))
            flat.extend(row)
    elif isinstance(entry, list):
        flat = entry
        if len(flat) != N * N:
            raise GroupConfigError(f"generator {idx} has {len(flat)} entries, expected {N * N}",
                                   _locate(text, "generators", idx))
    else:
        raise GroupConfigError(f"generator {idx} is not an array", _locate(text, "generators", idx))
    out = []
    for j, tok in enumerate(flat):
        try:
            out.append(_parse_rational(tok))
        except (ValueError, ZeroDivisionError):
            row = j // N
            nested = isinstance(entry[0], list)
            line = _locate(text, "generators", idx, row) if nested else _locate(text, "generators", idx, j)
            raise GroupConfigError(f"generator {idx} row {row}: cannot parse entry {tok!r}", line)
    return np.array(out, dtype=object).reshape(N, N)


def _exact_inverse(g, Q):
    # g Q g^T = Q  =>  g^{-1} = Q g^T Q^{-1}
    Qinv = np.array([[Fraction(0)] * len(Q) for _ in Q], dtype=object)
    N = len(Q)
    Qinv[0, N - 1] = Qinv[N - 1, 0] = Fraction(-2)
    for i in range(1, N - 1):
        Qinv[i, i] = Fraction(1)
    return Q @ g.T @ Qinv


def _to_int(g):
    den = 1
    for x in g.ravel():
        den = math.lcm(den, Fraction(x).denominator)
    return np.array([[int(Fraction(x) * den) for x in row] for row in g], dtype=np.int64), den


def build_spec(n, generators, base_vectors, mode="float", bounded=True, X=None,
               margin=DEFAULT_MARGIN, name="", _text=""):
    """Validate generators and base vectors; close the generator set under inverses."""
    if mode not in ("integer", "float"):
        raise GroupConfigError(f"mode must be 'integer' or 'float', got {mode!r}")
    N = n + 2
    space = standard_form(n, exact=True)
    Q = space.gram
    exact = []
    for idx, g in enumerate(generators):
        g = np.asarray(g, dtype=object)
        if g.shape != (N, N):
            raise GroupConfigError(f"generator {idx} has shape {g.shape}, expected {(N, N)}")
        if mode == "integer":
            g = np.vectorize(Fraction, otypes=[object])(g)
            diff = g @ Q @ g.T - Q
            if any(x != 0 for x in diff.ravel()):
                raise GroupConfigError(
                    f"generator {idx} does not preserve Q; residual max {max(abs(x) for x in diff.ravel())}\n{g}",
                    _locate(_text, "generators", idx) if _text else None)
        else:
            gf = g.astype(float)
            resid = np.abs(gf @ Q.astype(float) @ gf.T - Q.astype(float)).max()
            if resid > FLOAT_TOL * max(1.0, np.abs(gf).max() ** 2):
                raise GroupConfigError(f"generator {idx} does not preserve Q; residual {resid:.3e}\n{gf}",
                                       _locate(_text, "generators", idx) if _text else None)
        exact.append(g)

    closed = []
    for g in exact:
        if mode == "integer":
            cands = [g, _exact_inverse(g, Q)]
        else:
            gf = g.astype(float)
            cands = [gf, np.linalg.inv(gf)]
        for c in cands:
            if not any(_same(c, h) for h in closed):
                closed.append(c)

    bases = []
    for v in base_vectors:
        v = np.array([_parse_rational(x) for x in v], dtype=object)
        if len(v) != N:
            raise GroupConfigError(f"base vector has length {len(v)}, expected {N}")
        q = v @ Q @ v
        if mode == "integer":
            if q != 1:
                raise GroupConfigError(f"base vector {list(map(str, v))} has Q = {q}, expected 1")
        elif abs(float(q) - 1) > FLOAT_TOL:
            raise GroupConfigError(f"base vector has Q = {float(q)}, expected 1")
        bases.append(v)
    if not bases:
        raise GroupConfigError("at least one base vector is required")

    spec = GroupSpec(n, [], [], mode, bounded, X, margin, name=name)
    if mode == "integer":
        for v in bases:
            if any(Fraction(x).denominator != 1 for x in v):
                raise GroupConfigError("integer mode needs integral base vectors")
        spec.base_vectors = [np.array([int(x) for x in v], dtype=np.int64) for v in bases]
        spec.generators = closed
        for g in closed:
            G, den = _to_int(g)
            spec.int_generators.append(G)
            spec.denominators.append(den)
    else:
        spec.base_vectors = [v.astype(float) for v in bases]
        spec.generators = [np.asarray(g, dtype=float) for g in closed]
    return spec


def _same(a, b):
    if a.dtype == object or b.dtype == object:
        return all(x == y for x, y in zip(a.ravel(), b.ravel()))
    return np.allclose(a, b, atol=1e-12, rtol=0)


def load_group(path):
    """Read a JSON group configuration; see the README for the schema."""
    with open(path) as fh:
        text = fh.read()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GroupConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    try:
        n = int(cfg["n"])
        gens = cfg["generators"]
    except (KeyError, TypeError, ValueError) as exc:
        raise GroupConfigError(f"missing or invalid field: {exc}") from None
    if "base_vectors" in cfg:
        bases = cfg["base_vectors"]
    elif "base_vector" in cfg:
        bases = [cfg["base_vector"]]
    else:
        raise GroupConfigError("missing field 'base_vector'")
    N = n + 2
    mats = [_matrix_from(entry, N, text, i) for i, entry in enumerate(gens)]
    return build_spec(n, mats, bases, mode=cfg.get("mode", "float"),
                      bounded=bool(cfg.get("bounded", True)), X=cfg.get("X"),
                      margin=float(cfg.get("margin", DEFAULT_MARGIN)),
                      name=cfg.get("name", os.path.basename(str(path))), _text=text)


# --- enumeration ---------------------------------------------------------------

def worker_count(workers=None):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("KLEINIAN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning("ignoring non-integer KLEINIAN_THREADS=%r", env)
    return 1


class _IntKeys:
    def __init__(self):
        self.seen = set()

    def key(self, v):
        return v.tobytes()

    def probe(self, v):
        return v.tobytes() in self.seen

    def add(self, v):
        self.seen.add(v.tobytes())

    def add_rows(self, rows):
        self.seen.update(_row_bytes(rows))


def _row_bytes(rows):
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    return rows.view(np.dtype((np.void, rows.dtype.itemsize * rows.shape[1]))).ravel().tolist()


def _merge_integer(parts, keys):
    """Unique unseen children (lexicographic order) with their minimal parent bend."""
    allc = np.concatenate([c for part in parts for c, _ in part])
    allp = np.concatenate([p for part in parts for _, p in part])
    order = np.lexsort(allc.T[::-1])
    rows, pb = allc[order], allp[order]
    starts = np.flatnonzero(np.concatenate([[True], np.any(rows[1:] != rows[:-1], axis=1)]))
    uniq = rows[starts]
    pmin = np.minimum.reduceat(pb, starts)
    fresh = np.fromiter((k not in keys.seen for k in _row_bytes(uniq)), dtype=bool, count=len(uniq))
    return uniq[fresh], pmin[fresh]


class _FloatKeys:
    """Quantized float keys; coordinates near a cell edge probe the neighbor cell."""

    def __init__(self, grid=FLOAT_GRID):
        self.grid = grid
        self.seen = set()

    def _cells(self, v):
        r = np.asarray(v) / self.grid
        base = np.round(r).astype(np.int64)
        frac = r - base
        edge = np.nonzero(np.abs(frac) > 0.4)[0]
        if len(edge) == 0:
            return [base.tobytes()]
        cells = []
        for signs in product((0, 1), repeat=len(edge)):
            c = base.copy()
            for e, s in zip(edge, signs):
                if s:
                    c[e] += 1 if frac[e] > 0 else -1
            cells.append(c.tobytes())
        return cells

    def key(self, v):
        return np.round(np.asarray(v) / self.grid).astype(np.int64).tobytes()

    def probe(self, v):
        return any(c in self.seen for c in self._cells(v))

    def add(self, v):
        self.seen.add(self.key(v))


def _apply(spec, block, gi):
    if spec.mode == "integer":
        G = spec.int_generators[gi]
        den = spec.denominators[gi]
        bound = np.abs(block).max(initial=0) * np.abs(G).max() * spec.dim
        if bound >= INT_LIMIT:
            raise OverflowError("integer orbit vectors exceed the int64 range")
        out = block @ G
        if den != 1:
            if np.any(out % den):
                raise GroupConfigError("orbit left the integer lattice; use float mode")
            out //= den
        return out
    return block @ spec.generators[gi]


def _bz_norm(block):
    return np.sqrt(np.sum(np.asarray(block[:, 1:-1], dtype=float) ** 2, axis=1))


def _expand_chunk(spec, block, parent_bends):
    out = []
    for gi in range(len(spec.generators)):
        out.append((_apply(spec, block, gi), parent_bends))
    return out


def orbit_enumerate(spec, T, max_depth=None, workers=None, margin=None, max_nodes=DEFAULT_MAX_NODES,
                    keep_vectors=False):
    """Enumerate the orbit spheres with bend < T.

    A node is expanded unless its bend exceeds margin * T while its parent's
    bend already exceeded T.  The frontier is processed level by level; each
    level is split into chunks for the worker pool and merged in a fixed
    order, with the parent bend of a multiply-discovered child taken as the
    minimum, so the result is independent of the worker count.
    """
    margin = spec.margin if margin is None else margin
    nworkers = worker_count(workers)
    keys = _IntKeys() if spec.mode == "integer" else _FloatKeys()
    found = []
    explored = 0
    horizon = T
    complete = True
    check_X = spec.X is not None and not spec.bounded

    def admissible(block):
        if not check_X:
            return np.ones(len(block), dtype=bool)
        return _bz_norm(block) < spec.X

    pool = ThreadPoolExecutor(nworkers) if nworkers > 1 else None
    try:
        for v0 in spec.base_vectors:
            v0 = np.asarray(v0)
            if keys.probe(v0):
                continue
            keys.add(v0)
            found.append(v0[None, :][admissible(v0[None, :])])
            frontier = v0[None, :]
            parent_b = np.array([-np.inf])
            depth = 0
            while len(frontier):
                if max_depth is not None and depth >= max_depth:
                    complete = False
                    horizon = min(horizon, float(np.min(frontier[:, 0])))
                    break
                if len(keys.seen) > max_nodes:
                    complete = False
                    horizon = min(horizon, float(np.min(frontier[:, 0])))
                    logger.warning("orbit enumeration stopped at %d nodes", len(keys.seen))
                    break
                b = frontier[:, 0].astype(float)
                expand = ~((b > margin * T) & (parent_b > T)) & admissible(frontier)
                block = frontier[expand]
                pb = b[expand]
                if len(block) == 0:
                    break
                nchunks = nworkers if pool else 1
                chunks = np.array_split(np.arange(len(block)), nchunks)
                if pool:
                    parts = list(pool.map(lambda idx: _expand_chunk(spec, block[idx], pb[idx]), chunks))
                else:
                    parts = [_expand_chunk(spec, block[idx], pb[idx]) for idx in chunks]
                explored += len(block) * len(spec.generators)
                if spec.mode == "integer":
                    children, parents = _merge_integer(parts, keys)
                    if len(children) == 0:
                        break
                    keys.add_rows(children)
                    keep = admissible(children)
                    found.append(children[keep])
                    frontier = children
                    parent_b = parents
                    depth += 1
                    continue
                # merge: minimal parent bend per new key
                new = {}
                for part in parts:
                    for children, parents in part:
                        for child, p in zip(children, parents):
                            if keys.probe(child):
                                continue
                            k = keys.key(child)
                            cur = new.get(k)
                            if cur is None or p < cur[1]:
                                new[k] = (child, p)
                if not new:
                    break
                items = sorted(new.items(), key=lambda kv: kv[0])
                children = np.array([c for _, (c, _) in items])
                parents = np.array([p for _, (_, p) in items], dtype=float)
                for c in children:
                    keys.add(c)
                keep = admissible(children)
                found.append(children[keep])
                frontier = children
                parent_b = parents
                depth += 1
    finally:
        if pool:
            pool.shutdown()

    vecs = np.concatenate(found)
    bends = vecs[:, 0].astype(float)
    inside = bends < horizon
    order = np.lexsort(np.asarray(vecs[inside], dtype=float).T[::-1])
    vecs = vecs[inside][order]
    bends = sorted(vecs[:, 0].astype(float).tolist())
    return PackingCount(bends, float(horizon), int(explored), complete,
                        vecs if keep_vectors else None)


def count(pc, T):
    """Number of stored bends strictly below T."""
    if T > pc.horizon:
        raise IncompleteCountError(f"T = {T} exceeds the certified horizon {pc.horizon}")
    return bisect.bisect_left(pc.bends, T)


def fit_delta(pc, T_low, T_high, num_points=40):
    """Least-squares slope of log N(T) against log T on a geometric grid."""
    if T_high > pc.horizon:
        raise IncompleteCountError(f"T_high = {T_high} exceeds the horizon {pc.horizon}")
    if num_points < 2 or not T_low < T_high:
        raise InsufficientDataError("need at least two grid points and T_low < T_high")
    Ts = np.geomspace(T_low, T_high, num_points)
    Ns = np.array([count(pc, T) for T in Ts], dtype=float)
    if Ns[0] < 10:
        raise InsufficientDataError(f"N(T_low) = {int(Ns[0])} < 10")
    x, y = np.log(Ts), np.log(Ns)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if np.ptp(Ns) == 0:
        return DeltaFit(0.0, float(y[0]), float("nan"), (T_low, T_high), degenerate=True)
    r2 = 1 - float(np.sum(resid ** 2)) / ss_tot
    return DeltaFit(float(slope), float(intercept), min(max(r2, 0.0), 1.0), (T_low, T_high))


def smoothed_count(pc, T, epsilon):
    """Sum over bends b of W((log T - log b) / epsilon), W the integrated unit bump.

    Bends <= 0 always contribute 1.  Each term is exactly 1 once
    b <= T e^-eps and exactly 0 once b >= T e^eps, which gives
    smoothed(T (1 - c eps)) <= N(T) <= smoothed(T (1 + c eps)) for
    c = SANDWICH_C and 0 < eps < 1/2.
    """
    from kleinian.spectral import integrated_bump

    if not 0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 1/2)")
    if T * math.exp(epsilon) > pc.horizon:
        raise IncompleteCountError(f"T e^eps = {T * math.exp(epsilon)} exceeds the horizon {pc.horizon}")
    bends = np.asarray(pc.bends)
    lo = bisect.bisect_right(pc.bends, T * math.exp(-epsilon))
    hi = bisect.bisect_left(pc.bends, T * math.exp(epsilon))
    band = bends[lo:hi]
    pos = band > 0
    value = float(lo)
    if len(band):
        value += float(np.sum(integrated_bump((math.log(T) - np.log(band[pos])) / epsilon)))
        value += float(np.sum(~pos))
    return SmoothedCount(value, epsilon, T)


# --- SL(2, R) rows ------------------------------------------------------------

def sl2_row_count(generators, T, max_depth=None, margin=DEFAULT_MARGIN, max_nodes=200_000,
                  max_levels=2_000):
    """Count distinct bottom rows (c, d) of the orbit (0, 1) Gamma with c^2 + d^2 < T.

    Entries given as ints, Fractions or rational strings are handled exactly.
    """
    mats = []
    for g in generators:
        g = [[_parse_rational(x) if isinstance(x, str) else x for x in row] for row in g]
        if all(isinstance(x, (int, Fraction)) for row in g for x in row):
            g = [[Fraction(x) for x in row] for row in g]
            det = g[0][0] * g[1][1] - g[0][1] * g[1][0]
            if det != 1:
                raise ValueError(f"generator {g} has determinant {det}")
            inv = [[g[1][1], -g[0][1]], [-g[1][0], g[0][0]]]
        else:
            g = [[float(x) for x in row] for row in g]
            det = g[0][0] * g[1][1] - g[0][1] * g[1][0]
            if abs(det - 1) > FLOAT_TOL:
                raise ValueError(f"generator {g} has determinant {det}")
            inv = [[g[1][1], -g[0][1]], [-g[1][0], g[0][0]]]
        for m in (g, inv):
            if m not in mats:
                mats.append(m)

    def key(row):
        c, d = row
        if isinstance(c, Fraction) and isinstance(d, Fraction):
            return (c, d)
        return (round(float(c) / FLOAT_GRID), round(float(d) / FLOAT_GRID))

    exact = all(isinstance(x, Fraction) for m in mats for row in m for x in row)
    start = (Fraction(0), Fraction(1)) if exact else (0.0, 1.0)
    seen = {key(start)}
    rows = [start]
    frontier = [(start, -math.inf)]
    depth = 0
    while frontier:
        if max_depth is not None and depth >= max_depth:
            break
        nxt = {}
        for (c, d), pnorm in frontier:
            nrm = float(c * c + d * d)
            if nrm > margin * T and pnorm > T:
                continue
            for m in mats:
                child = (c * m[0][0] + d * m[1][0], c * m[0][1] + d * m[1][1])
                k = key(child)
                if k in seen:
                    continue
                if k not in nxt or nrm < nxt[k][1]:
                    nxt[k] = (child, nrm)
        for k in sorted(nxt, key=lambda kk: tuple(float(x) for x in kk)):
            seen.add(k)
            rows.append(nxt[k][0])
        if len(seen) > max_nodes or (max_depth is None and depth >= max_levels):
            raise FrontierOverflowError(
                f"{len(seen)} rows after {depth + 1} levels; the orbit may be infinite below T, pass max_depth")
        frontier = list(nxt.values())
        depth += 1
    return sum(1 for c, d in rows if float(c * c + d * d) < T)
