"""Disjoint-set forest whose members carry integer grid offsets."""
from __future__ import annotations


class ClusterForest:
    """Union-find over ``n`` pieces with positions relative to each cluster root.

    ``offset[i]`` is the (row, col) of ``i`` relative to its parent; after
    :meth:`find` with path compression it is relative to the root. Each root
    keeps an index of occupied cells (in root coordinates) and a bounding box.
    """

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.offset = [(0, 0)] * n
        self.cells = {i: {(0, 0): i} for i in range(n)}
        self.bbox = {i: (0, 0, 0, 0) for i in range(n)}

    def find(self, i: int) -> tuple[int, tuple[int, int]]:
        """Root of ``i`` and ``i``'s position in root coordinates."""
        path = []
        node = i
        while self.parent[node] != node:
            path.append(node)
            node = self.parent[node]
        root = node
        # compress from the node nearest the root outwards
        for node in reversed(path):
            parent = self.parent[node]
            if parent != root:
                pr, pc = self.offset[parent]
                r, c = self.offset[node]
                self.offset[node] = (r + pr, c + pc)
                self.parent[node] = root
        return root, (self.offset[i] if path else (0, 0))

    def position(self, i: int) -> tuple[int, int]:
        return self.find(i)[1]

    def members(self, root: int) -> dict[tuple[int, int], int]:
        return self.cells[root]

    def size(self, root: int) -> int:
        return len(self.cells[root])

    def roots(self) -> list[int]:
        return sorted(self.cells)

    def try_union(self, i: int, j: int, delta: tuple[int, int],
                  max_rows: int | None = None, max_cols: int | None = None) -> bool:
        """Merge so that ``j`` sits at ``position(i) + delta``.

        Returns False, leaving the forest untouched, if both are already in
        one cluster, if any two pieces would share a cell, or if the merged
        bounding box would exceed ``max_rows`` x ``max_cols``.
        """
        ra, pi = self.find(i)
        rb, pj = self.find(j)
        if ra == rb:
            return False
        # translation taking cluster b coordinates into cluster a coordinates
        t = (pi[0] + delta[0] - pj[0], pi[1] + delta[1] - pj[1])
        a0, a1, a2, a3 = self.bbox[ra]
        b0, b1, b2, b3 = self.bbox[rb]
        box = (min(a0, b0 + t[0]), min(a1, b1 + t[1]), max(a2, b2 + t[0]), max(a3, b3 + t[1]))
        if max_rows is not None and box[2] - box[0] + 1 > max_rows:
            return False
        if max_cols is not None and box[3] - box[1] + 1 > max_cols:
            return False
        cells_a, cells_b = self.cells[ra], self.cells[rb]
        small, large = (cells_b, cells_a) if len(cells_b) <= len(cells_a) else (cells_a, cells_b)
        shift = t if small is cells_b else (-t[0], -t[1])
        for (r, c) in small:
            if (r + shift[0], c + shift[1]) in large:
                return False

        if small is cells_b:
            keep, drop = ra, rb
        else:
            keep, drop = rb, ra
            box = (box[0] - t[0], box[1] - t[1], box[2] - t[0], box[3] - t[1])
        for (r, c), piece in self.cells[drop].items():
            self.cells[keep][(r + shift[0], c + shift[1])] = piece
        del self.cells[drop]
        del self.bbox[drop]
        self.bbox[keep] = box
        self.parent[drop] = keep
        self.offset[drop] = shift
        return True
