"""
Three transformer sets chained by spectral tokens pooling.

Set 1 embeds image patches. Its patch tokens are clustered on their
attention graph and averaged, and the result, with set 1's [cls] output,
feeds set 2. Set 2's output is pooled again on the coarsened graph for
set 3.
"""
from dataclasses import dataclass, field

import torch
from torch import nn

from encoder.model import PatchEmbed, SetSpec, TransformerSet
from pooling.graph import build_grid_adjacency, coarsen_adjacency
from pooling.kmeans import ITERATIONS, RESTARTS
from pooling.spectral import average_pool, cluster_tokens


@dataclass
class CascadeTrace:
    """Per-set outputs of one batch, with the poolings between them.

    ``assignments[k]`` and ``adjacencies[k + 1]`` hold one entry per batch
    item for the pooling in front of set k + 2.
    """
    outputs: list = field(default_factory=list)
    assignments: list = field(default_factory=list)
    adjacencies: list = field(default_factory=list)
    n_tokens: int = 0

    def prefix(self, depth):
        return CascadeTrace(self.outputs[:depth],
                            self.assignments[:max(0, depth - 1)],
                            self.adjacencies[:depth], self.n_tokens)


class HierarchicalCascade(nn.Module):

    def __init__(self, sets, schedule, mode="copy", restarts=RESTARTS,
                 iterations=ITERATIONS):
        super().__init__()
        if len(schedule) != len(sets):
            raise ValueError("Need one pooling schedule entry per set")
        if sets[0].embedding is None:
            raise ValueError("The first set must own the patch embedding")
        self.sets = nn.ModuleList(sets)
        self.schedule = tuple(schedule)
        self.mode = mode
        self.restarts = restarts
        self.iterations = iterations

    @property
    def depth(self):
        return len(self.sets)

    def cluster_count(self, level, n_tokens):
        """Tokens entering set ``level`` for a view of ``n_tokens`` patches"""
        count = n_tokens * self.schedule[level] // self.schedule[0]
        if count < 1 or count * self.schedule[0] != \
                n_tokens * self.schedule[level]:
            raise ValueError(
                f"{n_tokens} tokens cannot pool at ratio "
                f"{self.schedule[level]}/{self.schedule[0]}"
            )
        return count

    def _cluster(self, a_p, adjacencies, n_clusters, rng):
        if all(adj is adjacencies[0] for adj in adjacencies):
            return cluster_tokens(a_p, adjacencies[0], n_clusters, rng,
                                  self.restarts, self.iterations)
        return [
            cluster_tokens(a, adj, n_clusters, rng, self.restarts,
                           self.iterations)
            for a, adj in zip(a_p, adjacencies)
        ]

    def forward(self, images, rng, depth=None, sets=None, start=None):
        """Run the first ``depth`` sets on a (B, C, H, W) batch.

        ``sets`` replaces the cascade's own sets (the EMA teacher passes
        its copies). ``start`` is a trace whose outputs are reused instead
        of being recomputed.
        """
        sets = self.sets if sets is None else sets
        depth = len(sets) if depth is None else depth
        trace = start.prefix(len(start.outputs)) if start else None
        if trace is None or not trace.outputs:
            tokens = sets[0].embed(images)
            adj = build_grid_adjacency(*tokens.grid)
            trace = CascadeTrace(adjacencies=[[adj] * images.shape[0]],
                                 n_tokens=tokens.num_tokens)
            trace.outputs.append(sets[0](tokens))
        for k in range(len(trace.outputs), depth):
            prev = trace.outputs[-1]
            n_clusters = self.cluster_count(k, trace.n_tokens)
            assignments = self._cluster(prev.attention.patch_block,
                                        trace.adjacencies[-1], n_clusters,
                                        rng)
            pooled = average_pool(prev.f_p, assignments, self.mode)
            trace.assignments.append(assignments)
            trace.adjacencies.append([
                coarsen_adjacency(adj, a)
                for adj, a in zip(trace.adjacencies[-1], assignments)
            ])
            trace.outputs.append(sets[k](sets[k].inherit(prev.f_c, pooled)))
        return trace


def build_cascade(cfg):
    """Cascade of ``cfg``'s three sets; initialisation uses torch's
    global generator, so seed it first."""
    embedding = PatchEmbed(cfg.channels, cfg.patch_size, cfg.dims[0],
                           image_sides=[cfg.image_side, cfg.local_side])
    sets = []
    for k, dim in enumerate(cfg.dims):
        spec = SetSpec(
            dim=dim,
            depth=cfg.depths[k],
            num_heads=cfg.heads,
            out_dim=cfg.out_dim,
            mlp_ratio=cfg.mlp_ratio,
            head_hidden=cfg.head_hidden,
            head_bottleneck=cfg.head_bottleneck,
        )
        sets.append(TransformerSet(
            spec,
            in_dim=cfg.dims[k - 1] if k else None,
            embedding=embedding if k == 0 else None,
        ))
    return HierarchicalCascade(sets, cfg.pool_schedule, cfg.pool_backward,
                               cfg.pool_restarts, cfg.pool_iterations)


def extract_features(model, images, stage, rng, batch_size=64):
    """[cls] features of transformer set ``stage`` (1-based), (B, D)"""
    if not 1 <= stage <= model.depth:
        raise ValueError(f"stage must be in [1, {model.depth}]")
    was_training = model.training
    model.eval()
    features = []
    with torch.no_grad():
        for i in range(0, len(images), batch_size):
            trace = model(images[i:i + batch_size], rng, depth=stage)
            features.append(trace.outputs[stage - 1].f_c)
    model.train(was_training)
    return torch.cat(features)
