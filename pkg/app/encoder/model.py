"""
Toy vision-transformer building blocks.

One ``TransformerSet`` is a stack of pre-norm attention blocks with its own
projection head. The first set of a cascade also owns the patch embedding;
later sets receive pooled tokens through an input adapter.
"""
from dataclasses import dataclass

import torch
from torch import nn
import torch.nn.functional as F

from core.exceptions import StaleCacheError
from encoder.tokens import AttentionRecord, EncoderOutput, TokenSequence

DTYPE = torch.float64


def init_weights(module):
    if isinstance(module, nn.Linear):
        nn.init.trunc_normal_(module.weight, std=0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.LayerNorm):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


class PatchEmbed(nn.Module):
    """Linear map of flattened P x P patches plus learned positions.

    Every grid size the model will see (global and local crops) gets its own
    positional table; nothing is interpolated.
    """

    def __init__(self, in_chans, patch_size, dim, image_sides):
        super().__init__()
        self.in_chans = in_chans
        self.patch_size = patch_size
        self.dim = dim
        self.proj = nn.Linear(in_chans * patch_size * patch_size, dim)
        self.cls_token = nn.Parameter(torch.zeros(1, dim))
        self.pos_embed = nn.ParameterDict()
        for side in sorted(set(image_sides)):
            if side % patch_size:
                raise ValueError(
                    f"Image side {side} is not divisible by patch size "
                    f"{patch_size}"
                )
            n = (side // patch_size) ** 2
            self.pos_embed[str(n)] = nn.Parameter(torch.zeros(n, dim))
        nn.init.trunc_normal_(self.cls_token, std=0.02)
        for table in self.pos_embed.values():
            nn.init.trunc_normal_(table, std=0.02)
        init_weights(self.proj)

    def forward(self, images):
        if images.dim() != 4 or images.shape[1] != self.in_chans:
            raise ValueError(
                f"Expected (batch, {self.in_chans}, H, W) images, "
                f"got {tuple(images.shape)}"
            )
        _, _, h, w = images.shape
        p = self.patch_size
        if h % p or w % p:
            raise ValueError(
                f"Image {h}x{w} is not divisible by patch size {p}"
            )
        grid_h, grid_w = h // p, w // p
        key = str(grid_h * grid_w)
        if key not in self.pos_embed:
            raise ValueError(f"No positional table for {key} patches")

        # (B, C*P*P, N) -> (B, N, C*P*P), patches in row-major grid order
        flat = F.unfold(images, kernel_size=p, stride=p).transpose(1, 2)
        patches = self.proj(flat) + self.pos_embed[key]
        cls = self.cls_token.expand(images.shape[0], -1)
        return TokenSequence(cls, patches, grid_h, grid_w)


def patch_embed(images, embedding):
    """Split images into patch tokens with the learned embedding"""
    return embedding(images)


class Attention(nn.Module):

    def __init__(self, dim, num_heads):
        super().__init__()
        if dim % num_heads:
            raise ValueError(
                f"dim {dim} is not divisible by {num_heads} heads"
            )
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        b, n, c = x.shape
        head_dim = c // self.num_heads
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        x = (attn @ v).transpose(1, 2).reshape(b, n, c)
        return self.proj(x), attn


class Block(nn.Module):

    def __init__(self, dim, num_heads, mlp_ratio):
        super().__init__()
        hidden = int(dim * mlp_ratio)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, hidden),
            nn.GELU(),
            nn.Linear(hidden, dim),
        )

    def forward(self, x):
        y, attn = self.attn(self.norm1(x))
        x = x + y
        x = x + self.mlp(self.norm2(x))
        return x, attn


class ProjectionHead(nn.Module):
    """Two-layer MLP, L2 bottleneck, then a linear map to D'"""

    def __init__(self, in_dim, out_dim, hidden_dim, bottleneck_dim):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(in_dim, hidden_dim),
            nn.GELU(),
            nn.Linear(hidden_dim, bottleneck_dim),
        )
        self.last_layer = nn.Linear(bottleneck_dim, out_dim, bias=False)

    def forward(self, x):
        x = F.normalize(self.mlp(x), dim=-1, p=2)
        return self.last_layer(x)


@dataclass
class SetSpec:
    dim: int
    depth: int
    num_heads: int
    out_dim: int
    mlp_ratio: float = 2.0
    head_hidden: int = 64
    head_bottleneck: int = 32


class ForwardCache:
    """Graph and inputs of one ``forward_cached`` call"""

    def __init__(self, tokens, output, generation):
        self.tokens = tokens
        self.output = output
        self.generation = generation
        self.released = False


class TransformerSet(nn.Module):
    """One transformer set: blocks, [cls] handling and projection head.

    ``in_dim`` is the width of incoming pooled tokens; when it differs from
    ``spec.dim`` a linear adapter maps both [cls] and patch tokens.
    """

    def __init__(self, spec, in_dim=None, embedding=None):
        super().__init__()
        self.spec = spec
        self.embedding = embedding
        in_dim = spec.dim if in_dim is None else in_dim
        if in_dim == spec.dim:
            self.adapter = nn.Identity()
        else:
            self.adapter = nn.Linear(in_dim, spec.dim)
        self.blocks = nn.ModuleList(
            Block(spec.dim, spec.num_heads, spec.mlp_ratio)
            for _ in range(spec.depth)
        )
        self.head = ProjectionHead(
            spec.dim, spec.out_dim, spec.head_hidden, spec.head_bottleneck
        )
        self._generation = 0
        for name, module in self.named_modules():
            if name.startswith("embedding"):
                continue
            init_weights(module)
        self.to(DTYPE)

    @property
    def generation(self):
        return self._generation

    def bump_generation(self):
        """Invalidate forward caches after the parameters change"""
        self._generation += 1

    def embed(self, images):
        if self.embedding is None:
            raise ValueError("This transformer set has no patch embedding")
        return patch_embed(images, self.embedding)

    def inherit(self, cls, pooled):
        """Token sequence for this set from the previous set's outputs"""
        return TokenSequence(self.adapter(cls), self.adapter(pooled))

    def forward(self, tokens):
        if tokens.dim != self.spec.dim:
            raise ValueError(
                f"Token dim {tokens.dim} does not match set dim "
                f"{self.spec.dim}"
            )
        x = torch.cat([tokens.cls.unsqueeze(1), tokens.patches], dim=1)
        attn = None
        for block in self.blocks:
            x, attn = block(x)
        if attn is None:
            # no blocks: tokens attend uniformly
            n = x.shape[1]
            attn = x.new_full((x.shape[0], 1, n, n), 1.0 / n)
        f_c = x[:, 0]
        return EncoderOutput(
            f_c=f_c,
            f_p=x[:, 1:],
            attention=AttentionRecord(attn.mean(dim=1)),
            projection=self.head(f_c),
        )

    def forward_cached(self, tokens):
        """Forward pass that keeps what ``backward`` needs"""
        leaf = TokenSequence(
            tokens.cls.detach().clone().requires_grad_(True),
            tokens.patches.detach().clone().requires_grad_(True),
            tokens.grid_h,
            tokens.grid_w,
        )
        with torch.enable_grad():
            output = self(leaf)
        return output, ForwardCache(leaf, output, self._generation)

    def backward(self, grads, cache):
        """Reverse-mode pass for upstream gradients on an EncoderOutput.

        ``grads`` maps any of ``f_c``, ``f_p``, ``projection`` and
        ``attention`` to a tensor shaped like that output. Returns
        ``(param_grads, token_grads)``: a name -> gradient dict for every
        parameter and a TokenSequence holding gradients on the inputs.
        """
        if cache.released or cache.generation != self._generation:
            raise StaleCacheError(
                "Forward cache is stale; run forward_cached again"
            )
        outputs = {
            "f_c": cache.output.f_c,
            "f_p": cache.output.f_p,
            "projection": cache.output.projection,
            "attention": cache.output.attention.full,
        }
        unknown = set(grads) - set(outputs)
        if unknown:
            raise ValueError(f"Unknown outputs: {sorted(unknown)}")
        names = [name for name in outputs if name in grads]
        named_params = [
            (name, p) for name, p in self.named_parameters() if p.requires_grad
        ]
        inputs = [p for _, p in named_params]
        inputs += [cache.tokens.cls, cache.tokens.patches]
        cache.released = True
        if not names:
            found = [None] * len(inputs)
        else:
            found = torch.autograd.grad(
                [outputs[name] for name in names],
                inputs,
                grad_outputs=[grads[name] for name in names],
                allow_unused=True,
            )
        found = [
            torch.zeros_like(x) if g is None else g
            for x, g in zip(inputs, found)
        ]
        param_grads = {
            name: g for (name, _), g in zip(named_params, found)
        }
        token_grads = TokenSequence(
            found[-2], found[-1], cache.tokens.grid_h, cache.tokens.grid_w
        )
        return param_grads, token_grads


def set_requires_grad(module, flag):
    for p in module.parameters():
        p.requires_grad_(flag)
