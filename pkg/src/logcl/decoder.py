"""Fusion, ConvTransE scoring and the prediction losses."""
from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def fuse(h_local: torch.Tensor, h_global: torch.Tensor, lam: float) -> torch.Tensor:
    """``lam * h_global + (1 - lam) * h_local``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return lam * h_global + (1 - lam) * h_local


class ConvTransE(nn.Module):
    """Convolutional translational scorer.

    The query entity and relation vectors are stacked as two channels of
    length ``dim``, convolved with ``channels`` kernels of width
    ``kernel_size`` (length-preserving padding), flattened, projected back
    to ``dim`` and matched against every candidate row by dot product.
    """

    def __init__(self, dim: int, channels: int = 50, kernel_size: int = 3, dropout: float = 0.2, batch_norm: bool = True):
        super().__init__()
        self.conv = nn.Conv1d(2, channels, kernel_size, stride=1, padding=(kernel_size - 1) // 2)
        self.fc = nn.Linear(channels * dim, dim)
        self.drop_in = nn.Dropout(dropout)
        self.drop_feat = nn.Dropout(dropout)
        self.drop_hidden = nn.Dropout(dropout)
        if batch_norm:
            self.bn0 = nn.BatchNorm1d(2)
            self.bn1 = nn.BatchNorm1d(channels)
            self.bn2 = nn.BatchNorm1d(dim)
        else:
            self.bn0 = self.bn1 = self.bn2 = nn.Identity()

    def query(self, h: torch.Tensor, r: torch.Tensor) -> torch.Tensor:
        x = torch.stack([h, r], dim=1)  # (N, 2, d)
        x = self.drop_in(self.bn0(x))
        x = self.conv(x)
        x = self.drop_feat(torch.relu(self.bn1(x)))
        x = self.drop_hidden(self.fc(x.flatten(1)))
        if x.size(0) > 1 or not self.training:
            x = self.bn2(x)
        return torch.relu(x)

    def forward(self, h: torch.Tensor, r: torch.Tensor, candidates: torch.Tensor) -> torch.Tensor:
        """Unnormalized scores of shape (N, |candidates|)."""
        return self.query(h, r) @ candidates.t()


def score_probs(logits: torch.Tensor, mode: str = "softmax") -> torch.Tensor:
    if mode == "softmax":
        return torch.softmax(logits, dim=-1)
    if mode == "sigmoid":
        return torch.sigmoid(logits)
    raise ValueError(f"unknown score mode {mode!r}")


def tkg_loss(logits: torch.Tensor, truths: torch.Tensor, mode: str = "softmax", reduction: str = "sum") -> torch.Tensor:
    """Negative log-likelihood of the true object for each query."""
    truths = torch.as_tensor(truths, device=logits.device).view(-1)
    if truths.numel() and (truths.min() < 0 or truths.max() >= logits.size(-1)):
        raise ValueError("truth id outside the candidate range")
    if mode == "softmax":
        return F.cross_entropy(logits, truths, reduction=reduction)
    if mode == "sigmoid":
        target = F.one_hot(truths, logits.size(-1)).to(logits.dtype)
        loss = F.binary_cross_entropy_with_logits(logits, target, reduction="none").sum(dim=1)
        return loss.sum() if reduction == "sum" else loss.mean()
    raise ValueError(f"unknown score mode {mode!r}")


def total_loss(l_tkg, l_cl):
    for name, value in (("L_tkg", l_tkg), ("L_cl", l_cl)):
        v = float(value.detach()) if torch.is_tensor(value) else float(value)
        if not math.isfinite(v):
            raise ValueError(f"{name} is not finite ({v})")
    return l_tkg + l_cl
