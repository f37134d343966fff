"""Robust random cut forest with collusive-displacement scoring.

Scoring a query means inserting it into every tree, reading its
co-displacement off the insertion path and deleting it again.  The
descent path does not depend on randomness, only the level at which the
query gets cut off does, so the score is computed read-only from the path
in one vectorised pass; ``RandomCutTree.insert``/``delete`` remain as the
mutating reference.  Uniform draws come from a generator seeded by the
forest seed and the query bytes, so scores do not depend on call order.
"""

from __future__ import annotations

import threading
import zlib

import numpy as np

from .base import Detector, Percentile


class _Leaf:
    __slots__ = ("x", "n", "lo", "hi")

    def __init__(self, x: np.ndarray, n: int = 1):
        self.x = x
        self.n = n
        self.lo = x
        self.hi = x


class _Branch:
    __slots__ = ("q", "p", "l", "r", "n", "lo", "hi")

    def __init__(self, q: int, p: float, l, r, n: int, lo: np.ndarray, hi: np.ndarray):
        self.q, self.p, self.l, self.r, self.n, self.lo, self.hi = q, p, l, r, n, lo, hi


def _pick_cut(lo: np.ndarray, hi: np.ndarray, u: float) -> tuple[int, float]:
    """Cut dimension chosen proportionally to extent, position uniform; ``u`` in [0, 1)."""
    span = hi - lo
    cum = np.cumsum(span)
    r = u * cum[-1]
    dim = int(np.searchsorted(cum, r, side="right"))
    dim = min(dim, len(span) - 1)
    return dim, float(lo[dim] + r - (cum[dim] - span[dim]))


class RandomCutTree:
    def __init__(self, points: np.ndarray, seed: int):
        self.seed = int(seed)
        self.lock = threading.Lock()
        rng = np.random.default_rng(self.seed)
        self.root = self._build(np.asarray(points, dtype=float), rng)
        self._compile()

    def _build(self, X: np.ndarray, rng):
        lo, hi = X.min(axis=0), X.max(axis=0)
        if len(X) == 1 or not np.any(hi > lo):
            return _Leaf(X[0].copy(), len(X))
        while True:
            q, p = _pick_cut(lo, hi, rng.random())
            left = X[:, q] <= p
            if left.any() and not left.all():
                break
        return _Branch(q, p, self._build(X[left], rng), self._build(X[~left], rng), len(X), lo, hi)

    @property
    def size(self) -> int:
        return self.root.n

    def _descend(self, x: np.ndarray):
        path = []
        node = self.root
        while isinstance(node, _Branch):
            path.append(node)
            node = node.l if x[node.q] <= node.p else node.r
        return node, path

    def _replace(self, parent, old, new) -> None:
        if parent is None:
            self.root = new
        elif parent.l is old:
            parent.l = new
        else:
            parent.r = new

    def _compile(self) -> None:
        """Flat arrays of the current structure for read-only scoring."""
        order, stack = [], [self.root]
        while stack:
            node = stack.pop()
            order.append(node)
            if isinstance(node, _Branch):
                stack.extend((node.r, node.l))
        ids = {id(nd): i for i, nd in enumerate(order)}
        self._q = [nd.q if isinstance(nd, _Branch) else -1 for nd in order]
        self._p = [nd.p if isinstance(nd, _Branch) else 0.0 for nd in order]
        self._left = [ids[id(nd.l)] if isinstance(nd, _Branch) else -1 for nd in order]
        self._right = [ids[id(nd.r)] if isinstance(nd, _Branch) else -1 for nd in order]
        self._n = np.array([nd.n for nd in order], dtype=float)
        self._lo = np.array([nd.lo for nd in order])
        self._hi = np.array([nd.hi for nd in order])
        depth, todo = 0, [(0, 1)]
        while todo:
            i, dd = todo.pop()
            depth = max(depth, dd)
            if self._left[i] >= 0:
                todo.extend(((self._left[i], dd + 1), (self._right[i], dd + 1)))
        self.depth = depth

    def codisp_readonly(self, x: np.ndarray, u: np.ndarray) -> float:
        """Co-displacement ``x`` would get from :meth:`insert` with the same uniforms."""
        q, p, left, right = self._q, self._p, self._left, self._right
        path = [0]
        i = 0
        while left[i] >= 0:
            i = left[i] if x[q[i]] <= p[i] else right[i]
            path.append(i)
        n = self._n[path]
        if np.array_equal(self._lo[i], x):
            if len(path) == 1:
                return 0.0
            return float(((n[:-1] - n[1:]) / (n[1:] + 1)).max())
        lo = self._lo[path]
        hi = self._hi[path]
        lo_hat = np.minimum(lo, x)
        hi_hat = np.maximum(hi, x)
        span = hi_hat - lo_hat
        cum = np.cumsum(span, axis=1)
        r = u[:len(path)] * cum[:, -1]
        dim = np.minimum((cum <= r[:, None]).sum(axis=1), x.size - 1)
        rows = np.arange(len(path))
        cut = lo_hat[rows, dim] + r - (cum[rows, dim] - span[rows, dim])
        sep = (cut < lo[rows, dim]) | (cut >= hi[rows, dim])
        level = int(np.argmax(sep))
        best = n[level]
        if level:
            best = max(best, float(((n[:level] - n[1:level + 1]) / (n[1:level + 1] + 1)).max()))
        return float(best)

    def insert(self, x: np.ndarray, u: np.ndarray) -> tuple[_Leaf, list]:
        """Insert ``x`` using uniform draws ``u`` (one per level visited).

        Returns the new (or duplicated) leaf and the branch path from the root.
        """
        leaf, path = self._descend(x)
        if np.array_equal(leaf.x, x):
            for b in path:
                b.n += 1
            leaf.n += 1
            return leaf, path
        node, parent, path = self.root, None, []
        new_leaf = _Leaf(np.array(x, dtype=float))
        level = 0
        while True:
            lo = np.minimum(node.lo, x)
            hi = np.maximum(node.hi, x)
            q, p = _pick_cut(lo, hi, u[level])
            level += 1
            if p < node.lo[q]:
                branch = _Branch(q, p, new_leaf, node, node.n + 1, lo, hi)
                break
            if p >= node.hi[q]:
                branch = _Branch(q, p, node, new_leaf, node.n + 1, lo, hi)
                break
            parent = node
            path.append(node)
            node = node.l if x[node.q] <= node.p else node.r
        self._replace(parent, node, branch)
        for b in path:
            b.n += 1
            b.lo = np.minimum(b.lo, x)
            b.hi = np.maximum(b.hi, x)
        path.append(branch)
        return new_leaf, path

    def delete(self, x: np.ndarray) -> None:
        leaf, path = self._descend(x)
        if not np.array_equal(leaf.x, x):
            raise KeyError("point not present in tree")
        if leaf.n > 1:
            leaf.n -= 1
            for b in path:
                b.n -= 1
            return
        parent = path[-1]
        sibling = parent.r if parent.l is leaf else parent.l
        grand = path[-2] if len(path) > 1 else None
        self._replace(grand, parent, sibling)
        for b in reversed(path[:-1]):
            b.n -= 1
            b.lo = np.minimum(b.l.lo, b.r.lo)
            b.hi = np.maximum(b.l.hi, b.r.hi)

    @staticmethod
    def codisp(leaf: _Leaf, path: list) -> float:
        best = 0.0
        node = leaf
        for parent in reversed(path):
            sibling = parent.r if parent.l is node else parent.l
            best = max(best, sibling.n / node.n)
            node = parent
        return best

    def score_by_insertion(self, x: np.ndarray, u: np.ndarray) -> float:
        """Reference scoring: insert, read co-displacement, delete (tree is restored)."""
        with self.lock:
            leaf, path = self.insert(x, u)
            value = self.codisp(leaf, path)
            self.delete(x)
        return value

    def structure(self):
        """Nested tuple describing the tree exactly, for equality checks."""
        def walk(node):
            if isinstance(node, _Leaf):
                return ("leaf", node.n, node.x.tobytes())
            return ("branch", node.q, node.p, node.n, node.lo.tobytes(), node.hi.tobytes(),
                    walk(node.l), walk(node.r))
        return walk(self.root)


def reservoir_sample(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of a uniform size-``k`` sample of a length-``n`` stream (algorithm R)."""
    if n <= k:
        return np.arange(n)
    sample = np.arange(k)
    draws = rng.integers(0, np.arange(k, n) + 1)
    for i, j in enumerate(draws, start=k):
        if j < k:
            sample[j] = i
    return np.sort(sample)


class RrcfForest(Detector):
    kind = "rrcf"
    default_threshold = Percentile(0.999)

    def __init__(self, seed: int = 0, n_trees: int = 40, tree_size: int = 256):
        super().__init__(seed)
        self.n_trees = n_trees
        self.tree_size = tree_size
        self.trees: list[RandomCutTree] = []
        self.samples: list[np.ndarray] = []
        self.tree_seeds: list[int] = []

    def _fit_normalized(self, Xn: np.ndarray) -> None:
        rng = np.random.default_rng(self.seed)
        self.samples, self.tree_seeds = [], []
        for _ in range(self.n_trees):
            idx = reservoir_sample(len(Xn), self.tree_size, rng)
            self.samples.append(Xn[idx])
            self.tree_seeds.append(int(rng.integers(0, 2 ** 63 - 1)))
        self._grow()

    def _grow(self) -> None:
        self.trees = [RandomCutTree(s, sd) for s, sd in zip(self.samples, self.tree_seeds)]
        self._max_depth = max(t.depth for t in self.trees) + 1

    def uniforms(self, x: np.ndarray) -> np.ndarray:
        """Per-tree uniform draws for query ``x``: shape (n_trees, max depth + 1)."""
        x = np.ascontiguousarray(x, dtype=float)
        rng = np.random.default_rng([self.seed, zlib.crc32(x.tobytes())])
        return rng.random((len(self.trees), self._max_depth))

    def _score_normalized(self, Xn: np.ndarray) -> np.ndarray:
        out = np.empty(len(Xn))
        for j, x in enumerate(np.ascontiguousarray(Xn, dtype=float)):
            u = self.uniforms(x)
            out[j] = np.mean([t.codisp_readonly(x, u[k]) for k, t in enumerate(self.trees)])
        return out

    def score_by_insertion(self, x: np.ndarray) -> float:
        """Same score as :meth:`score_normalized` computed by mutating each tree."""
        x = np.ascontiguousarray(x, dtype=float)
        u = self.uniforms(x)
        return float(np.mean([t.score_by_insertion(x, u[k]) for k, t in enumerate(self.trees)]))

    def get_state(self):
        params, arrays = self._base_state()
        params.update(n_trees=self.n_trees, tree_size=self.tree_size, tree_seeds=self.tree_seeds)
        for i, s in enumerate(self.samples):
            arrays[f"sample{i}"] = s
        return params, arrays

    def _set_state(self, params, arrays):
        self._set_base_state(params, arrays)
        self.n_trees, self.tree_size = params["n_trees"], params["tree_size"]
        self.tree_seeds = [int(s) for s in params["tree_seeds"]]
        self.samples = [np.array(arrays[f"sample{i}"]) for i in range(len(self.tree_seeds))]
        self._grow()
