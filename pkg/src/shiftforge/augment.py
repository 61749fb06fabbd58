"""Training-time augmentation and channel normalization."""

from __future__ import annotations

from dataclasses import dataclass

import torch

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class AugmentationConfig:
    """Flips and additive noise on [0, 1] images, then normalization.

    Normalization always runs last, channel-wise (x - mean) / std; the
    evaluation path applies normalization only.
    """

    horizontal_flip: bool = True
    vertical_flip: bool = True
    gaussian_noise_std: float = 0.01
    normalize_mean: tuple[float, float, float] = IMAGENET_MEAN
    normalize_std: tuple[float, float, float] = IMAGENET_STD

    def to_dict(self) -> dict:
        return {
            "horizontal_flip": self.horizontal_flip,
            "vertical_flip": self.vertical_flip,
            "gaussian_noise_std": self.gaussian_noise_std,
            "normalize_mean": list(self.normalize_mean),
            "normalize_std": list(self.normalize_std),
        }

    @classmethod
    def from_dict(cls, row: dict) -> "AugmentationConfig":
        return cls(
            horizontal_flip=bool(row.get("horizontal_flip", True)),
            vertical_flip=bool(row.get("vertical_flip", True)),
            gaussian_noise_std=float(row.get("gaussian_noise_std", 0.01)),
            normalize_mean=tuple(row.get("normalize_mean", IMAGENET_MEAN)),
            normalize_std=tuple(row.get("normalize_std", IMAGENET_STD)),
        )


def apply_flips(images: torch.Tensor, cfg: AugmentationConfig, generator: torch.Generator) -> torch.Tensor:
    """Independent per-sample horizontal/vertical flips with probability 1/2.

    Flips permute pixels, so per-channel batch statistics are exactly
    preserved.
    """
    out = images
    if cfg.horizontal_flip:
        mask = torch.rand(len(images), generator=generator) < 0.5
        if mask.any():
            out = out.clone()
            out[mask] = out[mask].flip(-1)
    if cfg.vertical_flip:
        mask = torch.rand(len(images), generator=generator) < 0.5
        if mask.any():
            if out is images:
                out = out.clone()
            out[mask] = out[mask].flip(-2)
    return out


def apply_noise(images: torch.Tensor, cfg: AugmentationConfig, generator: torch.Generator) -> torch.Tensor:
    if cfg.gaussian_noise_std <= 0:
        return images
    noise = torch.randn(images.shape, generator=generator) * cfg.gaussian_noise_std
    return images + noise


def normalize(images: torch.Tensor, cfg: AugmentationConfig) -> torch.Tensor:
    mean = torch.tensor(cfg.normalize_mean, dtype=images.dtype).view(1, 3, 1, 1)
    std = torch.tensor(cfg.normalize_std, dtype=images.dtype).view(1, 3, 1, 1)
    return (images - mean) / std


def train_transform(images: torch.Tensor, cfg: AugmentationConfig, generator: torch.Generator) -> torch.Tensor:
    """Flips, then noise, then normalization."""
    out = apply_flips(images, cfg, generator)
    out = apply_noise(out, cfg, generator)
    return normalize(out, cfg)


def eval_transform(images: torch.Tensor, cfg: AugmentationConfig) -> torch.Tensor:
    return normalize(images, cfg)
