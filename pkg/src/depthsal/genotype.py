"""Discrete fusion architectures: argmax decode, text format, edge analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .cells import CELL_TYPES, ArchParams, cell_edges
from .ops import OP_NAMES

FORMAT_HEADER = "# depthsal genotype v1"


@dataclass
class Genotype:
    """Per cell type, a map edge (i, j) -> chosen op name."""

    cells: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, Genotype):
            return NotImplemented
        return self.cells == other.cells

    def emit(self) -> str:
        lines = [FORMAT_HEADER]
        for t in CELL_TYPES:
            if t not in self.cells:
                continue
            lines.append(f"[{t}]")
            for (i, j), op in sorted(self.cells[t].items(), key=lambda e: (e[0][1], e[0][0])):
                lines.append(f"{i}->{j}: {op}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.emit())

    @classmethod
    def parse(cls, text: str) -> "Genotype":
        lines = text.splitlines()
        if not lines or lines[0].strip() != FORMAT_HEADER:
            raise ValueError("missing or unsupported genotype header")
        cells = {}
        current = None
        for raw in lines[1:]:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                if current not in CELL_TYPES:
                    raise ValueError(f"unknown cell type section: {current!r}")
                cells[current] = {}
                continue
            if current is None:
                raise ValueError(f"edge line before any section: {line!r}")
            edge_part, _, op = line.partition(":")
            op = op.strip()
            if op not in OP_NAMES:
                raise ValueError(f"unknown op in genotype: {op!r}")
            src, _, dst = edge_part.strip().partition("->")
            cells[current][(int(src), int(dst))] = op
        return cls(cells=cells)

    @classmethod
    def load(cls, path) -> "Genotype":
        with open(path) as fh:
            return cls.parse(fh.read())


def discretize(alpha: ArchParams, top2_prune: bool = False) -> Genotype:
    """Per edge, per cell type, keep the argmax op (first op wins ties).

    With `top2_prune`, each intermediate node keeps only its two strongest
    incoming edges (by max softmax weight), the usual DARTS convention.
    """
    cells = {}
    for t, spec in alpha.specs.items():
        edges = cell_edges(spec)
        logits = alpha.logits[t].detach()
        choice = torch.argmax(logits, dim=-1)
        table = {edge: OP_NAMES[int(choice[row])] for row, edge in enumerate(edges)}
        if top2_prune:
            weights = torch.softmax(logits, dim=-1)
            strength = weights.max(dim=-1).values
            kept = {}
            for j in range(spec.num_inputs, spec.num_nodes):
                rows = [(row, edge) for row, edge in enumerate(edges) if edge[1] == j]
                rows.sort(key=lambda re: (-float(strength[re[0]]), re[1][0]))
                for row, edge in rows[:2]:
                    kept[edge] = table[edge]
            table = kept
        cells[t] = table
    return Genotype(cells=cells)


def count_modality_edges(genotype: Genotype) -> tuple[int, int]:
    """Operation counts on MM-cell edges leaving RGB vs depth input nodes.

    MM inputs are ordered (rgb, rgb, depth, depth); skip and pooling edges do
    not count as operations.
    """
    rgb, depth = 0, 0
    passive = {"skip", "max_pool3"}
    for (i, j), op in genotype.cells.get("mm", {}).items():
        if op in passive:
            continue
        if i in (0, 1):
            rgb += 1
        elif i in (2, 3):
            depth += 1
    return rgb, depth
