"""Local/global query contrast: projection heads and supervised contrastive losses."""
from __future__ import annotations

import logging

import torch
import torch.nn as nn
import torch.nn.functional as F

logger = logging.getLogger(__name__)

NORM_EPS = 1e-12


class ProjectionHead(nn.Module):
    """Linear -> activation -> linear on ``[h || r]``, then L2-normalized."""

    def __init__(
        self,
        dim: int,
        proj_dim: int | None = None,
        activation: nn.Module | None = None,
        hidden_dim: int | None = None,
    ):
        super().__init__()
        proj_dim = proj_dim or dim
        hidden_dim = hidden_dim or dim
        self.fc1 = nn.Linear(2 * dim, hidden_dim)
        self.act = activation if activation is not None else nn.ReLU()
        self.fc2 = nn.Linear(hidden_dim, proj_dim)
        self.zero_norm_events = 0

    def forward(self, h: torch.Tensor, r: torch.Tensor) -> torch.Tensor:
        z = self.fc2(self.act(self.fc1(torch.cat([h, r], dim=-1))))
        norms = z.detach().norm(dim=-1)
        if (norms < NORM_EPS).any():
            self.zero_norm_events += int((norms < NORM_EPS).sum())
            logger.warning("projection produced %d zero vector(s); epsilon-guarded", int((norms < NORM_EPS).sum()))
        return F.normalize(z, dim=-1, eps=NORM_EPS)


def supcon_loss(
    anchors: torch.Tensor,
    candidates: torch.Tensor,
    labels,
    tau: float,
    same_view: bool = False,
    label_positives: bool = True,
) -> torch.Tensor:
    """Supervised contrastive loss of ``anchors`` against ``candidates``.

    Cross-view (``same_view=False``): candidate ``i`` is always a positive
    for anchor ``i`` and the denominator runs over every candidate.
    Same-view: anchor ``i`` is excluded from both its positives and the
    denominator. With ``label_positives`` any candidate sharing the
    anchor's label is also a positive. Anchors without positives add zero;
    the result is averaged over all anchors.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    n = anchors.size(0)
    if candidates.size(0) != n:
        raise ValueError(f"count mismatch: {n} anchors vs {candidates.size(0)} candidates")
    labels = torch.as_tensor(labels, device=anchors.device).view(-1)
    if labels.numel() != n:
        raise ValueError("one label per anchor required")

    if same_view and n < 2:
        return (anchors * candidates).sum() * 0.0

    logits = anchors @ candidates.t() / tau
    eye = torch.eye(n, dtype=torch.bool, device=anchors.device)
    pos = labels.unsqueeze(0) == labels.unsqueeze(1) if label_positives else torch.zeros_like(eye)
    if same_view:
        pos = pos & ~eye
        logits = logits.masked_fill(eye, float("-inf"))
    else:
        pos = pos | eye
    log_prob = logits - torch.logsumexp(logits, dim=1, keepdim=True)
    log_prob = torch.where(pos, log_prob, torch.zeros_like(log_prob))
    n_pos = pos.sum(dim=1)
    per_anchor = -log_prob.sum(dim=1) / n_pos.clamp(min=1)
    return per_anchor.sum() / n


def contrastive_total(z_local: torch.Tensor, z_global: torch.Tensor, labels, tau: float, cross_label_positives: bool = True) -> torch.Tensor:
    """Mean of the local->global, global->local, local->local and global->global losses."""
    l_lg = supcon_loss(z_local, z_global, labels, tau, label_positives=cross_label_positives)
    l_gl = supcon_loss(z_global, z_local, labels, tau, label_positives=cross_label_positives)
    l_ll = supcon_loss(z_local, z_local, labels, tau, same_view=True)
    l_gg = supcon_loss(z_global, z_global, labels, tau, same_view=True)
    return (l_lg + l_gl + l_ll + l_gg) / 4
