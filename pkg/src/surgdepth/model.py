"""Full model assembly: patch embeddings, fusion block, ViT encoder,
ConvNeXt decoder, plus parameter counting."""

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .decoder import Decoder
from .encoder import Encoder, PatchEmbed
from .errors import ConfigError, ShapeError
from .fusion import FusionBlock, TokenGrid
from .rng import make_rng

DECODER_INPUTS = ("rgb_only", "rgb_and_depth")


@dataclass
class ModelConfig:
    image_h: int = 64
    image_w: int = 64
    patch: int = 8
    embed_dim: int = 64
    depth_blocks: int = 2
    heads: int = 4
    fusion_k: int = 7
    fusion_dim: int | None = None  # defaults to 2 * embed_dim
    decoder_blocks: int = 4
    num_classes: int = 4
    decoder_input: str = "rgb_only"
    seed: int = 0
    lr: float = 1e-3
    weight_decay: float = 0.05
    epochs: int = 50
    batch_size: int = 2

    def validate(self):
        if self.image_h % self.patch or self.image_w % self.patch:
            raise ConfigError("image dims must be divisible by patch size")
        if self.patch % 4:
            raise ConfigError("patch size must be divisible by 4")
        if self.embed_dim % 8:
            raise ConfigError("embed_dim must be divisible by 8")
        if self.embed_dim % self.heads:
            raise ConfigError("heads must divide embed_dim")
        if self.decoder_input not in DECODER_INPUTS:
            raise ConfigError(f"decoder_input must be one of {DECODER_INPUTS}")
        if self.fusion_k > min(self.grid_h, self.grid_w):
            raise ConfigError(
                f"fusion_k {self.fusion_k} exceeds token grid {self.grid_h}x{self.grid_w}")
        return self

    @property
    def grid_h(self):
        return self.image_h // self.patch

    @property
    def grid_w(self):
        return self.image_w // self.patch


def full_vitb_config(decoder_input="rgb_only"):
    """ViT-B configuration at the reference 480x640 resolution."""
    return ModelConfig(image_h=480, image_w=640, patch=16, embed_dim=768,
                       depth_blocks=12, heads=12, fusion_k=7,
                       decoder_blocks=4, num_classes=9,
                       decoder_input=decoder_input)


class Model:
    def __init__(self, cfg, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.dtype = dtype
        rng = make_rng(cfg.seed)
        c = cfg.embed_dim
        self.patch_embed_rgb = PatchEmbed(3, c, cfg.patch, rng=rng, dtype=dtype)
        self.patch_embed_depth = PatchEmbed(1, c, cfg.patch, rng=rng, dtype=dtype)
        self.fusion = FusionBlock(c, attn_dim=cfg.fusion_dim, k=cfg.fusion_k,
                                  rng=rng, dtype=dtype)
        self.encoder = Encoder(c, cfg.depth_blocks, cfg.heads,
                               n_tokens=cfg.grid_h * cfg.grid_w, rng=rng, dtype=dtype)
        dec_dim = c if cfg.decoder_input == "rgb_only" else 2 * c
        self.decoder = Decoder(dec_dim, cfg.patch, cfg.num_classes,
                               n_blocks=cfg.decoder_blocks, rng=rng, dtype=dtype)

    def forward(self, rgb, depth, baseline_rgb_only=False):
        """rgb (3,H,W), depth (1,H,W) -> logits (num_classes, H, W).

        baseline_rgb_only zeroes the depth input and feeds the RGB grid
        twice to the fusion query: the depth-blind control model.
        """
        cfg = self.cfg
        rgb = T.as_tensor(np.asarray(rgb, dtype=self.dtype))
        depth = T.as_tensor(np.asarray(depth, dtype=self.dtype))
        if rgb.shape != (3, cfg.image_h, cfg.image_w):
            raise ShapeError(f"expected rgb (3,{cfg.image_h},{cfg.image_w}), got {rgb.shape}")
        if depth.shape != (1, cfg.image_h, cfg.image_w):
            raise ShapeError(f"expected depth (1,{cfg.image_h},{cfg.image_w}), got {depth.shape}")
        if baseline_rgb_only:
            depth = T.as_tensor(np.zeros_like(depth.data))
        g_rgb = self.patch_embed_rgb(rgb)
        g_depth = self.patch_embed_depth(depth)
        g_rgb, g_depth = self.fusion(g_rgb, g_depth,
                                     query_depth=g_rgb if baseline_rgb_only else None)
        rgb_tokens, depth_tokens = self.encoder(g_rgb, g_depth)
        if cfg.decoder_input == "rgb_only":
            dec_in = rgb_tokens
        else:
            dec_in = T.concat([rgb_tokens, depth_tokens], axis=1)
        return self.decoder(dec_in, cfg.grid_h, cfg.grid_w, cfg.image_h, cfg.image_w)

    __call__ = forward

    def named_parameters(self):
        yield from self.patch_embed_rgb.named_parameters("patch_embed_rgb.")
        yield from self.patch_embed_depth.named_parameters("patch_embed_depth.")
        yield from self.fusion.named_parameters("fusion.")
        yield from self.encoder.named_parameters("encoder.")
        yield from self.decoder.named_parameters("decoder.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        if set(state) != set(own):
            missing = set(own) - set(state)
            extra = set(state) - set(own)
            raise ConfigError(f"checkpoint mismatch: missing={sorted(missing)}, extra={sorted(extra)}")
        for name, arr in state.items():
            if tuple(arr.shape) != tuple(own[name].shape):
                raise ConfigError(f"shape mismatch for {name}: {arr.shape} vs {own[name].shape}")
            own[name].data = arr.astype(own[name].dtype).copy()


def build_model(cfg, dtype=np.float32):
    return Model(cfg, dtype=dtype)


def param_count(model, breakdown=False):
    """Exact count of learnable scalars; optionally per top-level module."""
    per_module = {}
    total = 0
    for name, p in model.named_parameters():
        top = name.split(".", 1)[0]
        per_module[top] = per_module.get(top, 0) + p.size
        total += p.size
    if breakdown:
        return total, per_module
    return total
