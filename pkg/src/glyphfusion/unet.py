"""Conditional U-Net noise predictor.

Predicts the noise component of a noisy glyph given the step index, the
character class (26-way one-hot), and a real-valued style vector. The two
conditions are linearly projected and added to the timestep embedding; a
learned null style vector and a learned null class embedding switch the
network into its unconditional mode, and can be selected per sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F


@dataclass(frozen=True)
class UNetConfig:
    side: int = 32
    n_classes: int = 26
    style_dim: int = 512
    base_channels: int = 64
    channel_mult: tuple[int, ...] = (1, 2, 2)
    num_res_blocks: int = 2
    attn_middle: bool = True
    emb_dim: int | None = None

    def resolved_emb_dim(self) -> int:
        return self.emb_dim if self.emb_dim is not None else self.base_channels * 4

    def to_meta(self) -> dict:
        return {
            "side": self.side,
            "n_classes": self.n_classes,
            "style_dim": self.style_dim,
            "base_channels": self.base_channels,
            "channel_mult": list(self.channel_mult),
            "num_res_blocks": self.num_res_blocks,
            "attn_middle": self.attn_middle,
            "emb_dim": self.emb_dim,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "UNetConfig":
        d = dict(meta)
        d["channel_mult"] = tuple(d["channel_mult"])
        return cls(**d)


def _groups(ch: int) -> int:
    for g in (8, 4, 2, 1):
        if ch % g == 0:
            return g
    return 1


def _zero(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        nn.init.zeros_(p)
    return module


class SinusoidalEmbedding(nn.Module):
    """Standard transformer-style sin/cos embedding of the step index."""

    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        half = self.dim // 2
        freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32, device=t.device) / half)
        args = t.float()[:, None] * freqs[None, :]
        return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


class ResBlock(nn.Module):
    def __init__(self, ch_in: int, ch_out: int, emb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(ch_in), ch_in)
        self.conv1 = nn.Conv2d(ch_in, ch_out, 3, padding=1)
        self.emb_proj = nn.Linear(emb_dim, ch_out)
        self.norm2 = nn.GroupNorm(_groups(ch_out), ch_out)
        self.conv2 = _zero(nn.Conv2d(ch_out, ch_out, 3, padding=1))
        self.skip = nn.Conv2d(ch_in, ch_out, 1) if ch_in != ch_out else nn.Identity()

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.emb_proj(F.silu(emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class AttentionBlock(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.norm = nn.GroupNorm(_groups(ch), ch)
        self.qkv = nn.Conv2d(ch, ch * 3, 1)
        self.proj = _zero(nn.Conv2d(ch, ch, 1))
        self.scale = ch**-0.5

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        q, k, v = self.qkv(self.norm(x)).reshape(b, 3, c, h * w).unbind(1)
        attn = torch.softmax(torch.einsum("bci,bcj->bij", q, k) * self.scale, dim=-1)
        out = torch.einsum("bij,bcj->bci", attn, v).reshape(b, c, h, w)
        return x + self.proj(out)


class GlyphUNet(nn.Module):
    """U-Net epsilon predictor with class/style/null conditioning."""

    def __init__(self, cfg: UNetConfig):
        super().__init__()
        self.cfg = cfg
        emb_dim = cfg.resolved_emb_dim()
        base = cfg.base_channels

        self.time_embed = nn.Sequential(
            SinusoidalEmbedding(base),
            nn.Linear(base, emb_dim),
            nn.SiLU(),
            nn.Linear(emb_dim, emb_dim),
        )
        self.class_proj = nn.Linear(cfg.n_classes, emb_dim)
        self.style_proj = nn.Linear(cfg.style_dim, emb_dim)
        self.null_class = nn.Parameter(torch.randn(emb_dim) * 0.02)
        self.null_style = nn.Parameter(torch.randn(cfg.style_dim) * 0.02)

        chans = [base * m for m in cfg.channel_mult]
        self.conv_in = nn.Conv2d(1, chans[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        skip_chans = [chans[0]]
        ch = chans[0]
        for level, ch_out in enumerate(chans):
            blocks = nn.ModuleList()
            for _ in range(cfg.num_res_blocks):
                blocks.append(ResBlock(ch, ch_out, emb_dim))
                ch = ch_out
                skip_chans.append(ch)
            self.down_blocks.append(blocks)
            if level < len(chans) - 1:
                self.downsamples.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))
                skip_chans.append(ch)

        self.mid1 = ResBlock(ch, ch, emb_dim)
        self.mid_attn = AttentionBlock(ch) if cfg.attn_middle else nn.Identity()
        self.mid2 = ResBlock(ch, ch, emb_dim)

        self.up_blocks = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for level, ch_out in reversed(list(enumerate(chans))):
            blocks = nn.ModuleList()
            for _ in range(cfg.num_res_blocks + 1):
                blocks.append(ResBlock(ch + skip_chans.pop(), ch_out, emb_dim))
                ch = ch_out
            self.up_blocks.append(blocks)
            if level > 0:
                self.upsamples.append(nn.Upsample(scale_factor=2, mode="nearest"))

        self.out_norm = nn.GroupNorm(_groups(ch), ch)
        self.out_conv = _zero(nn.Conv2d(ch, 1, 3, padding=1))

    def condition_embedding(
        self,
        t: torch.Tensor,
        class_onehot: torch.Tensor | None,
        style: torch.Tensor | None,
        null_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Combine step, class, and style conditions into one embedding.

        ``class_onehot`` / ``style`` may be None to select the learned null
        pathway for all samples; ``null_mask`` (bool, per sample) drops both
        conditions jointly for the masked samples.
        """
        b = t.shape[0]
        emb = self.time_embed(t)

        if class_onehot is None:
            cls = self.null_class.unsqueeze(0).expand(b, -1)
        else:
            cls = self.class_proj(class_onehot)
        if style is None:
            sty = self.null_style.unsqueeze(0).expand(b, -1)
        else:
            sty = style
        if null_mask is not None:
            m = null_mask[:, None]
            cls = torch.where(m, self.null_class.unsqueeze(0).expand(b, -1), cls)
            sty = torch.where(m, self.null_style.unsqueeze(0).expand(b, -1), sty)
        return emb + cls + self.style_proj(sty)

    def forward(
        self,
        x: torch.Tensor,
        t: torch.Tensor,
        class_onehot: torch.Tensor | None = None,
        style: torch.Tensor | None = None,
        null_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        emb = self.condition_embedding(t, class_onehot, style, null_mask)

        h = self.conv_in(x)
        skips = [h]
        for level, blocks in enumerate(self.down_blocks):
            for block in blocks:
                h = block(h, emb)
                skips.append(h)
            if level < len(self.downsamples):
                h = self.downsamples[level](h)
                skips.append(h)

        h = self.mid2(self.mid_attn(self.mid1(h, emb)), emb)

        for i, blocks in enumerate(self.up_blocks):
            for block in blocks:
                h = block(torch.cat([h, skips.pop()], dim=1), emb)
            if i < len(self.upsamples):
                h = self.upsamples[i](h)

        return self.out_conv(F.silu(self.out_norm(h)))
