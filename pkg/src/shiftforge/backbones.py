"""Classifier backbones exposing (embedding, logits) pairs.

Every backbone returns the representation feeding its final classification
layer alongside the logits, since the contrastive term operates on exactly
that representation. A small convolutional net covers CPU-scale runs and
tests; the 50-layer residual network is the full-scale default, loading
pretrained weights from a local file when one is supplied.
"""

from __future__ import annotations

from typing import Callable

import torch
from torch import nn


class Backbone(nn.Module):
    """Interface: ``forward(images) -> (embeddings, logits)``."""

    embedding_dim: int
    default_gradcam_layer: str

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:  # pragma: no cover
        raise NotImplementedError


class SmallConvNet(Backbone):
    """Three conv blocks, global average pooling, linear classifier."""

    default_gradcam_layer = "features.conv3"

    def __init__(self, channels: int = 24, num_classes: int = 2):
        super().__init__()
        self.embedding_dim = channels * 2
        self.features = nn.Sequential()
        self.features.add_module("conv1", nn.Conv2d(3, channels, 3, padding=1))
        self.features.add_module("relu1", nn.ReLU(inplace=True))
        self.features.add_module("pool1", nn.MaxPool2d(2))
        self.features.add_module("conv2", nn.Conv2d(channels, channels * 2, 3, padding=1))
        self.features.add_module("relu2", nn.ReLU(inplace=True))
        self.features.add_module("pool2", nn.MaxPool2d(2))
        self.features.add_module("conv3", nn.Conv2d(channels * 2, channels * 2, 3, padding=1))
        self.features.add_module("relu3", nn.ReLU(inplace=True))
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.classifier = nn.Linear(self.embedding_dim, num_classes)

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        maps = self.features(images)
        embedding = self.pool(maps).flatten(1)
        return embedding, self.classifier(embedding)


class ResidualNet50(Backbone):
    """torchvision ResNet-50 with a fresh two-way head.

    ``weights_file`` points at a locally stored state dict (full-model or
    torchvision-format feature weights); nothing is downloaded. With
    ``freeze_features`` only the classification head trains.
    """

    default_gradcam_layer = "net.layer3"

    def __init__(
        self,
        num_classes: int = 2,
        weights_file: str | None = None,
        freeze_features: bool = False,
    ):
        super().__init__()
        from torchvision.models import resnet50

        self.net = resnet50(weights=None)
        self.embedding_dim = self.net.fc.in_features
        self.net.fc = nn.Linear(self.embedding_dim, num_classes)
        if weights_file:
            state = torch.load(weights_file, map_location="cpu", weights_only=True)
            missing, unexpected = self.net.load_state_dict(state, strict=False)
            head_keys = {"fc.weight", "fc.bias"}
            problems = (set(missing) | set(unexpected)) - head_keys
            if problems:
                raise ValueError(
                    f"weights file does not match the architecture: {sorted(problems)[:5]}"
                )
        if freeze_features:
            for name, parameter in self.net.named_parameters():
                if not name.startswith("fc."):
                    parameter.requires_grad_(False)

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        net = self.net
        x = net.conv1(images)
        x = net.bn1(x)
        x = net.relu(x)
        x = net.maxpool(x)
        x = net.layer1(x)
        x = net.layer2(x)
        x = net.layer3(x)
        x = net.layer4(x)
        embedding = net.avgpool(x).flatten(1)
        return embedding, net.fc(embedding)


BACKBONES: dict[str, Callable[..., Backbone]] = {
    "small_cnn": SmallConvNet,
    "resnet50": ResidualNet50,
}


def build_backbone(name: str, **options) -> Backbone:
    if name not in BACKBONES:
        raise ValueError(f"unknown backbone '{name}' (available: {', '.join(sorted(BACKBONES))})")
    return BACKBONES[name](**options)
