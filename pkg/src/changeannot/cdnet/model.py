"""U-Net with residual or VGG encoders and scSE attention in the decoder.

The encoder has four downsampling stages, so the bottleneck sits at 1/16 of
the input resolution:

    stage  resolution  residual-18/34  residual-50  vgg-*
    stem   1           64              64           64
    1      1/2         64              256          128
    2      1/4         128             512          256
    3      1/8         256             1024         512
    4      1/16        512             2048         512
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ArgumentError

ENCODER_KINDS = ("residual-18", "residual-34", "residual-50", "vgg-11", "vgg-16", "vgg-19")
DOWNSAMPLE_FACTOR = 16

_RESNET_LAYERS = {
    "residual-18": ("basic", (2, 2, 2, 2)),
    "residual-34": ("basic", (3, 4, 6, 3)),
    "residual-50": ("bottleneck", (3, 4, 6, 3)),
}
# convs per stage (stem + four downsampled stages)
_VGG_LAYERS = {
    "vgg-11": (1, 1, 2, 2, 2),
    "vgg-16": (2, 2, 3, 3, 3),
    "vgg-19": (2, 2, 4, 4, 4),
}
_VGG_WIDTHS = (64, 128, 256, 512, 512)


@dataclass
class ModelSpec:
    encoder_kind: str = "residual-34"
    in_channels: int = 6
    decoder_channels: tuple[int, ...] = (512, 256, 128, 64, 64)
    attention: bool = True

    def __post_init__(self):
        if self.encoder_kind not in ENCODER_KINDS:
            raise ArgumentError(
                f"unsupported encoder_kind {self.encoder_kind!r}; choose from {', '.join(ENCODER_KINDS)}")
        if self.in_channels < 2:
            raise ArgumentError(f"in_channels must be >= 2, got {self.in_channels}")
        self.decoder_channels = tuple(int(c) for c in self.decoder_channels)
        if len(self.decoder_channels) != 5:
            raise ArgumentError("decoder_channels needs 5 entries: center block + 4 upsampling blocks")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decoder_channels"] = list(self.decoder_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


def conv_bn_relu(cin: int, cout: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False),
        nn.BatchNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class BasicBlock(nn.Module):
    expansion = 1

    def __init__(self, cin, width, stride=1):
        super().__init__()
        cout = width * self.expansion
        self.conv1 = nn.Conv2d(cin, width, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(width)
        self.conv2 = nn.Conv2d(width, cout, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.shortcut = None
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(nn.Conv2d(cin, cout, 1, stride, bias=False), nn.BatchNorm2d(cout))

    def forward(self, x):
        identity = x if self.shortcut is None else self.shortcut(x)
        out = F.relu(self.bn1(self.conv1(x)), inplace=True)
        out = self.bn2(self.conv2(out))
        return F.relu(out + identity, inplace=True)


class Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, cin, width, stride=1):
        super().__init__()
        cout = width * self.expansion
        self.conv1 = nn.Conv2d(cin, width, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(width)
        self.conv2 = nn.Conv2d(width, width, 3, stride, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(width)
        self.conv3 = nn.Conv2d(width, cout, 1, bias=False)
        self.bn3 = nn.BatchNorm2d(cout)
        self.shortcut = None
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(nn.Conv2d(cin, cout, 1, stride, bias=False), nn.BatchNorm2d(cout))

    def forward(self, x):
        identity = x if self.shortcut is None else self.shortcut(x)
        out = F.relu(self.bn1(self.conv1(x)), inplace=True)
        out = F.relu(self.bn2(self.conv2(out)), inplace=True)
        out = self.bn3(self.conv3(out))
        return F.relu(out + identity, inplace=True)


class ResidualEncoder(nn.Module):
    def __init__(self, kind: str, in_channels: int):
        super().__init__()
        block_name, counts = _RESNET_LAYERS[kind]
        block = BasicBlock if block_name == "basic" else Bottleneck
        self.stem = conv_bn_relu(in_channels, 64)
        stages, cin = [], 64
        for width, n in zip((64, 128, 256, 512), counts):
            blocks = [block(cin, width, stride=2)]
            cin = width * block.expansion
            blocks += [block(cin, width) for _ in range(n - 1)]
            stages.append(nn.Sequential(*blocks))
        self.stages = nn.ModuleList(stages)
        self.channels = [64] + [w * block.expansion for w in (64, 128, 256, 512)]

    def forward(self, x):
        feats = [self.stem(x)]
        for stage in self.stages:
            feats.append(stage(feats[-1]))
        return feats


class VGGEncoder(nn.Module):
    def __init__(self, kind: str, in_channels: int):
        super().__init__()
        counts = _VGG_LAYERS[kind]
        stages, cin = [], in_channels
        for i, (width, n) in enumerate(zip(_VGG_WIDTHS, counts)):
            layers = [nn.MaxPool2d(2)] if i > 0 else []
            for _ in range(n):
                layers.append(conv_bn_relu(cin, width))
                cin = width
            stages.append(nn.Sequential(*layers))
        self.stages = nn.ModuleList(stages)
        self.channels = list(_VGG_WIDTHS)

    def forward(self, x):
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


def build_encoder(kind: str, in_channels: int) -> nn.Module:
    if kind in _RESNET_LAYERS:
        return ResidualEncoder(kind, in_channels)
    if kind in _VGG_LAYERS:
        return VGGEncoder(kind, in_channels)
    raise ArgumentError(f"unsupported encoder_kind {kind!r}")


class ChannelSE(nn.Module):
    def __init__(self, channels, reduction=2):
        super().__init__()
        self.fc = nn.Sequential(
            nn.AdaptiveAvgPool2d(1),
            nn.Conv2d(channels, channels // reduction, 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels // reduction, channels, 1),
            nn.Sigmoid(),
        )

    def forward(self, x):
        return x * self.fc(x)


class SpatialSE(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv = nn.Conv2d(channels, 1, 1)

    def forward(self, x):
        return x * torch.sigmoid(self.conv(x))


class SCSE(nn.Module):
    """Concurrent spatial and channel squeeze-and-excitation (additive merge)."""

    def __init__(self, channels, reduction=2):
        super().__init__()
        self.cse = ChannelSE(channels, reduction)
        self.sse = SpatialSE(channels)

    def forward(self, x):
        return self.cse(x) + self.sse(x)


class DecoderBlock(nn.Module):
    def __init__(self, cin, skip, cout, attention):
        super().__init__()
        self.conv1 = conv_bn_relu(cin + skip, cout)
        self.conv2 = conv_bn_relu(cout, cout)
        self.attention = SCSE(cout) if attention else nn.Identity()

    def forward(self, x, skip=None):
        if skip is not None:
            x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
            x = torch.cat([x, skip], dim=1)
        return self.attention(self.conv2(self.conv1(x)))


class ChangeUNet(nn.Module):
    """Early-fusion change detector: NCHW stacked pair in, NCHW probabilities out."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.encoder = build_encoder(spec.encoder_kind, spec.in_channels)
        enc = self.encoder.channels
        dec = spec.decoder_channels
        self.center = DecoderBlock(enc[4], 0, dec[0], spec.attention)
        blocks, cin = [], dec[0]
        for skip, cout in zip(reversed(enc[:4]), dec[1:]):
            blocks.append(DecoderBlock(cin, skip, cout, spec.attention))
            cin = cout
        self.decoder = nn.ModuleList(blocks)
        self.head = nn.Conv2d(cin, 1, 1)

    @property
    def bottleneck_channels(self) -> int:
        return self.encoder.channels[-1]

    def encode(self, x):
        check_input(x, self.spec.in_channels)
        return self.encoder(x)

    def forward(self, x):
        feats = self.encode(x)
        y = self.center(feats[-1])
        for block, skip in zip(self.decoder, reversed(feats[:-1])):
            y = block(y, skip)
        return torch.sigmoid(self.head(y))


def check_input(x: torch.Tensor, in_channels: int) -> None:
    if x.ndim != 4:
        raise ArgumentError(f"expected a 4-D batch, got shape {tuple(x.shape)}")
    if x.shape[1] != in_channels:
        raise ArgumentError(f"expected {in_channels} input channels, got {x.shape[1]}")
    h, w = x.shape[-2:]
    if h % DOWNSAMPLE_FACTOR or w % DOWNSAMPLE_FACTOR:
        raise ArgumentError(
            f"spatial dims must be divisible by {DOWNSAMPLE_FACTOR}, got {h}x{w}")


def build_model(spec: ModelSpec, seed: int | None = None) -> ChangeUNet:
    if seed is None:
        return ChangeUNet(spec)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return ChangeUNet(spec)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
