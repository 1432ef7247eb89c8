"""Bi-projection depth network: twin residual encoders over the
equirectangular and cubemap projections, a fusion module between every
encoder stage, and a single pixel-shuffle decoder with three fused skip
connections feeding four sigmoid-lifted depth heads.

Feature layout follows resample.py: equirect features are [N,C,H,W], cube
features are [6N,C,w,w] face-major.  Equirect-layout convolutions use
wrap-longitude padding; per-face cubemap convolutions use zero padding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import PaddingMode, Parameter, Tensor
from .errors import DimensionError
from .resample import c2e, e2c


class Conv2d:
    """Convolution layer holding uniformly initialized weight/bias parameters
    (range +-1/sqrt(fan_in))."""

    def __init__(self, name: str, cin: int, cout: int, k: int = 3, stride: int = 1,
                 padding: PaddingMode = PaddingMode.ZERO, rng: np.random.Generator = None,
                 dtype=np.float32, zero_init: bool = False):
        self.stride = stride
        self.padding = padding
        bound = 1.0 / np.sqrt(cin * k * k)
        if zero_init:
            w = np.zeros((cout, cin, k, k))
            b = np.zeros(cout)
        else:
            w = rng.uniform(-bound, bound, size=(cout, cin, k, k))
            b = rng.uniform(-bound, bound, size=(cout,))
        self.w = Parameter(f"{name}.w", w, dtype)
        self.b = Parameter(f"{name}.b", b, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.w.tensor, self.b.tensor, self.stride, self.padding)

    def parameters(self) -> list[Parameter]:
        return [self.w, self.b]


class ResidualBlock:
    """Two 3x3 convolutions with a skip: y = relu(x + c2(relu(c1(x))))."""

    def __init__(self, name, channels, padding, rng, dtype=np.float32):
        self.c1 = Conv2d(f"{name}.conv1", channels, channels, 3, 1, padding, rng, dtype)
        self.c2 = Conv2d(f"{name}.conv2", channels, channels, 3, 1, padding, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.relu(ad.add(x, self.c2(ad.relu(self.c1(x)))))

    def parameters(self):
        return self.c1.parameters() + self.c2.parameters()


class EncoderStage:
    """Strided channel-expanding convolution followed by residual blocks."""

    def __init__(self, name, cin, cout, blocks, stride, padding, rng, dtype=np.float32):
        self.down = Conv2d(f"{name}.down", cin, cout, 3, stride, padding, rng, dtype)
        self.blocks = [ResidualBlock(f"{name}.block{i + 1}", cout, padding, rng, dtype)
                       for i in range(blocks)]

    def __call__(self, x: Tensor) -> Tensor:
        x = ad.relu(self.down(x))
        for b in self.blocks:
            x = b(x)
        return x

    def parameters(self):
        out = self.down.parameters()
        for b in self.blocks:
            out += b.parameters()
        return out


class FusionModule:
    """Exchange of information between the two projection branches.

    f_equi' = f_equi + H_e(f_equi (+) C2E(f_cube))
    f_cube' = E2C(C2E(f_cube) + H_c(f_equi (+) C2E(f_cube)))
    f_fuse  = H_f(f_equi (+) C2E(f_cube))

    where (+) is channel concatenation.  The three convolutions are 3x3,
    stride 1, on the equirectangular layout (wrap-longitude padding).
    """

    def __init__(self, name, channels, rng, dtype=np.float32, zero_init: bool = False):
        self.h_e = Conv2d(f"{name}.h_e", 2 * channels, channels, 3, 1,
                          PaddingMode.WRAP, rng, dtype, zero_init=zero_init)
        self.h_c = Conv2d(f"{name}.h_c", 2 * channels, channels, 3, 1,
                          PaddingMode.WRAP, rng, dtype, zero_init=zero_init)
        self.h_f = Conv2d(f"{name}.h_f", 2 * channels, channels, 3, 1,
                          PaddingMode.WRAP, rng, dtype)

    def __call__(self, f_equi: Tensor, f_cube: Tensor):
        N, C, H, W = f_equi.data.shape
        cube_on_equi = c2e(f_cube, H)
        if cube_on_equi.data.shape != f_equi.data.shape:
            raise DimensionError(
                f"fusion: C2E(f_cube) shape {cube_on_equi.data.shape} "
                f"!= f_equi {f_equi.data.shape}")
        both = ad.concat([f_equi, cube_on_equi], axis=1)
        f_equi_out = ad.add(f_equi, self.h_e(both))
        w = f_cube.data.shape[-1]
        f_cube_out = e2c(ad.add(cube_on_equi, self.h_c(both)), w)
        f_fuse = self.h_f(both)
        return f_equi_out, f_cube_out, f_fuse

    def parameters(self):
        return self.h_e.parameters() + self.h_c.parameters() + self.h_f.parameters()


@dataclass
class DepthNetConfig:
    widths: tuple[int, ...] = (16, 32, 64, 128)
    blocks: int = 1
    cube_side: int = 32
    input_height: int = 64
    alpha: float = 10.0
    beta: float = 0.01
    # if set, the depth heads start out predicting (approximately) this value
    # everywhere instead of 1/(alpha/2 + beta); a photometric objective with
    # an initial prediction far below scene scale tends to collapse into the
    # zero-motion minimum before the depth scale can catch up
    init_depth: float | None = None

    def __post_init__(self):
        if len(self.widths) != 4:
            raise DimensionError("DepthNetConfig: exactly 4 stages required")
        if self.alpha <= 0 or self.beta <= 0:
            raise DimensionError("DepthNetConfig: alpha and beta must be positive")
        if self.init_depth is not None and not (
                self.depth_min < self.init_depth < self.depth_max):
            raise DimensionError(
                f"DepthNetConfig: init_depth must lie in "
                f"({self.depth_min:.4g}, {self.depth_max:.4g})")

    @property
    def depth_min(self) -> float:
        return 1.0 / (self.alpha + self.beta)

    @property
    def depth_max(self) -> float:
        return 1.0 / self.beta


def lift_depth(pre: Tensor, alpha: float, beta: float) -> Tensor:
    """Sigmoid depth lifting d = 1 / (alpha * sigmoid(pre) + beta)."""
    return ad.div(1.0, ad.add(ad.mul(ad.sigmoid(pre), alpha), beta))


class DepthNet:
    """Four-stage bi-projection encoder/decoder producing depth at four
    scales (d1 full resolution down to d4 at 1/8)."""

    def __init__(self, config: DepthNetConfig = None, seed: int = 0,
                 dtype=np.float32, prefix: str = "depthnet"):
        self.config = config or DepthNetConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)
        w = cfg.widths
        self.enc_e = []
        self.enc_c = []
        self.fusions = []
        cin = 3
        for s in range(4):
            self.enc_e.append(EncoderStage(f"{prefix}.enc_e.stage{s + 1}", cin, w[s],
                                           cfg.blocks, 2, PaddingMode.WRAP, rng, dtype))
            self.enc_c.append(EncoderStage(f"{prefix}.enc_c.stage{s + 1}", cin, w[s],
                                           cfg.blocks, 2, PaddingMode.ZERO, rng, dtype))
            self.fusions.append(FusionModule(f"{prefix}.fuse{s + 1}", w[s], rng, dtype))
            cin = w[s]
        # decoder: widths reversed; each step = conv -> pixel_shuffle(x2),
        # then concat the matching fused skip and merge
        # decoder step i upsamples 2x; step 0 emits d4 (1/8 res), step 3 emits d1
        self.dec_up = []
        self.dec_merge = []
        self.heads = []
        up_in = [w[3], w[2], w[1], w[0]]
        up_out = [w[2], w[1], w[0], w[0]]
        skip = [w[2], w[1], w[0], 0]
        for i in range(4):
            self.dec_up.append(Conv2d(f"{prefix}.dec.up{i + 1}", up_in[i],
                                      up_out[i] * 4, 3, 1, PaddingMode.WRAP, rng, dtype))
            self.dec_merge.append(Conv2d(f"{prefix}.dec.merge{i + 1}",
                                         up_out[i] + skip[i], up_out[i], 3, 1,
                                         PaddingMode.WRAP, rng, dtype))
            self.heads.append(Conv2d(f"{prefix}.head{4 - i}", up_out[i], 1, 1, 1,
                                     PaddingMode.ZERO, rng, dtype))
        if cfg.init_depth is not None:
            s = (1.0 / cfg.init_depth - cfg.beta) / cfg.alpha
            bias = float(np.log(s / (1.0 - s)))  # sigmoid(bias) == s
            for head in self.heads:
                head.b.tensor.data[:] = bias

    def parameters(self) -> list[Parameter]:
        out = []
        for stage in self.enc_e + self.enc_c:
            out += stage.parameters()
        for f in self.fusions:
            out += f.parameters()
        for c in self.dec_up + self.dec_merge + self.heads:
            out += c.parameters()
        return out

    def forward(self, equi: Tensor, cube: Tensor) -> list[Tensor]:
        """equi [N,3,H,W], cube [6N,3,w,w] -> [d1, d2, d3, d4], each [N,1,h,w]
        in meters within (1/(alpha+beta), 1/beta)."""
        cfg = self.config
        fe, fc = equi, cube
        fuses = []
        for s in range(4):
            fe = self.enc_e[s](fe)
            fc = self.enc_c[s](fc)
            fe, fc, ff = self.fusions[s](fe, fc)
            fuses.append(ff)
        x = fuses[3]
        outs = {}
        for i in range(4):
            x = ad.pixel_shuffle(self.dec_up[i](x), 2)
            if i < 3:
                x = ad.concat([x, fuses[2 - i]], axis=1)
            x = ad.relu(self.dec_merge[i](x))
            outs[4 - i] = lift_depth(self.heads[i](x), cfg.alpha, cfg.beta)
        return [outs[1], outs[2], outs[3], outs[4]]
