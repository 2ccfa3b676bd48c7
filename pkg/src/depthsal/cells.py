"""Searchable fusion cells: DAGs whose edges carry mixed operations.

A cell takes `num_inputs` feature maps (any channel counts, any spatial
sizes), projects each to the cell width with a 1x1 conv, resizes everything
to the coarsest input's resolution, then runs the DAG: every intermediate
node is the sum over all predecessors of one edge operation. The cell output
is a 1x1 projection of the concatenated intermediate nodes.

The four cell types share one architecture-parameter table per type; cell
instances own their op weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .ops import NUM_OPS, MixedOp

CELL_TYPES = ("mm", "ms", "ga", "sr")

DEFAULT_NUM_NODES = {"mm": 8, "ms": 8, "ga": 8, "sr": 4}
NUM_INPUTS = {"mm": 4, "ms": 3, "ga": 4, "sr": 3}


@dataclass(frozen=True)
class CellSpec:
    cell_type: str
    num_nodes: int
    num_inputs: int
    width: int

    def __post_init__(self):
        if self.cell_type not in CELL_TYPES:
            raise ValueError(f"unknown cell type: {self.cell_type!r}")
        if self.num_nodes <= self.num_inputs:
            raise ValueError("cell needs at least one intermediate node")


def default_specs(width: int, num_nodes: dict | None = None) -> dict[str, CellSpec]:
    nodes = dict(DEFAULT_NUM_NODES)
    if num_nodes:
        nodes.update(num_nodes)
    return {
        t: CellSpec(cell_type=t, num_nodes=nodes[t], num_inputs=NUM_INPUTS[t],
                    width=width)
        for t in CELL_TYPES
    }


def cell_edges(spec: CellSpec) -> list[tuple[int, int]]:
    """Canonical edge order: (i, j) for every intermediate j, all i < j."""
    return [(i, j)
            for j in range(spec.num_inputs, spec.num_nodes)
            for i in range(j)]


class ArchParams(nn.Module):
    """Per-cell-type logit tables alpha[(i,j)][op], shared across instances."""

    def __init__(self, specs: dict[str, CellSpec]):
        super().__init__()
        self.specs = specs
        self.logits = nn.ParameterDict({
            t: nn.Parameter(torch.zeros(len(cell_edges(spec)), NUM_OPS))
            for t, spec in specs.items()
        })

    def weights(self, cell_type: str) -> torch.Tensor:
        return F.softmax(self.logits[cell_type], dim=-1)

    def entropy(self, cell_type: str) -> float:
        """Mean per-edge softmax entropy (nats)."""
        w = self.weights(cell_type).detach()
        ent = -(w * torch.log(w.clamp_min(1e-12))).sum(dim=-1)
        return float(ent.mean())

    def entropies(self) -> dict[str, float]:
        return {t: self.entropy(t) for t in self.specs}


def resize_to(x: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


class Cell(nn.Module):
    """One DAG instance. Mixed (searchable) unless built with genotype edges,
    in which case each edge holds only its chosen op; pruned edges vanish."""

    def __init__(self, spec: CellSpec, in_channels: list[int],
                 genotype_edges: dict[tuple[int, int], str] | None = None):
        super().__init__()
        if len(in_channels) != spec.num_inputs:
            raise ValueError(
                f"{spec.cell_type} cell expects {spec.num_inputs} inputs, "
                f"got {len(in_channels)}"
            )
        self.spec = spec
        self.edges = cell_edges(spec)
        self._row = {edge: row for row, edge in enumerate(self.edges)}
        self.genotype_edges = dict(genotype_edges) if genotype_edges is not None else None
        self.projections = nn.ModuleList(
            [nn.Conv2d(c, spec.width, 1) for c in in_channels]
        )
        ops = {}
        for (i, j) in self.edges:
            key = f"e{i}_{j}"
            if self.genotype_edges is None:
                ops[key] = MixedOp(spec.width)
            elif (i, j) in self.genotype_edges:
                ops[key] = MixedOp(spec.width, fixed_op=self.genotype_edges[(i, j)])
        self.ops = nn.ModuleDict(ops)
        n_inter = spec.num_nodes - spec.num_inputs
        self.out_proj = nn.Conv2d(n_inter * spec.width, spec.width, 1)

    def forward(self, inputs: list[torch.Tensor],
                weights: torch.Tensor | None = None,
                hard_edges: dict[tuple[int, int], str] | None = None) -> torch.Tensor:
        """weights: (num_edges, NUM_OPS) softmax rows for mixed execution.
        hard_edges: run a mixed cell discretely with the given op per edge."""
        if len(inputs) != self.spec.num_inputs:
            raise ValueError("input arity mismatch")
        size = min((tuple(x.shape[-2:]) for x in inputs),
                   key=lambda hw: hw[0] * hw[1])
        nodes = [resize_to(proj(x), size)
                 for proj, x in zip(self.projections, inputs)]
        for j in range(self.spec.num_inputs, self.spec.num_nodes):
            acc = 0.0
            for i in range(j):
                key = f"e{i}_{j}"
                row = self._row[(i, j)]
                if self.genotype_edges is not None:
                    if (i, j) not in self.genotype_edges:
                        continue
                    acc = acc + self.ops[key](nodes[i])
                elif hard_edges is not None:
                    if (i, j) not in hard_edges:
                        continue
                    acc = acc + self.ops[key](nodes[i], op_name=hard_edges[(i, j)])
                else:
                    acc = acc + self.ops[key](nodes[i], weights=weights[row])
            if isinstance(acc, float):
                acc = torch.zeros_like(nodes[0])
            nodes.append(acc)
        inter = nodes[self.spec.num_inputs:]
        return self.out_proj(torch.cat(inter, dim=1))
