"""Model-facing side of the service.

Real pretrained segmentation/diffusion weights plug in behind
``Segmenter`` and ``Editor``; the shipped implementations back the same
contracts with the core library's toy machinery, which keeps the service
contract-equivalent to the core's in-process toy backend:

  - segmentation: a configured fixture mask served verbatim, or a
    corner-color difference heuristic (blank images yield zero masks)
  - inversion: truncated-timestep inversion with the closed-form Gaussian
    denoiser over a 4-float RGBA mean-color embedding
  - editing: the strength-truncated deterministic sampler; strength 0
    round-trips the input bytes exactly (enforced at the endpoint layer)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from deda.diffusion import (Identifier, ToyGaussianDenoiser, build_schedule,
                            ti_train, truncation_index)
from deda.editing import edit_sprite_toy, sprite_to_tensor

log = logging.getLogger("genbackend")

MODEL_VERSIONS = {"segmenter": "heuristic-1", "editor": "toy-posterior-1",
                  "inversion": "toy-truncated-1"}


class Segmenter:
    """Prompt-guided segmentation stand-in."""

    def __init__(self, fixture_mask: np.ndarray | None = None):
        self.fixture_mask = fixture_mask

    def segment(self, image: np.ndarray, prompt: str) -> list[np.ndarray]:
        if self.fixture_mask is not None:
            if self.fixture_mask.shape != image.shape[:2]:
                raise ValueError(
                    f"fixture mask {self.fixture_mask.shape} does not match "
                    f"image {image.shape[:2]}")
            return [self.fixture_mask]
        corner = image[0, 0].astype(np.int32)
        diff = np.abs(image.astype(np.int32) - corner).sum(axis=2)
        mask = (diff > 30).astype(np.uint8) * 255
        return [] if mask.max() == 0 else [mask]


@dataclass
class InversionResult:
    embedding: np.ndarray
    loss_trace: list[float]
    timestep_violations: int


class Editor:
    """Inversion + editing over the strength-truncated toy sampler."""

    def __init__(self, sigma0: float = 0.2):
        self.sched = build_schedule()
        self.sigma0 = sigma0

    def invert(self, class_id: int, sprites: list[np.ndarray], strength: float,
               steps: int, lr: float, batch: int, seed: int) -> InversionResult:
        tensors = [sprite_to_tensor(s) for s in sprites]
        rng = np.random.default_rng(np.random.SeedSequence((seed, class_id)))
        if len(tensors) > batch:
            picks = rng.choice(len(tensors), size=batch, replace=False)
            tensors = [tensors[i] for i in sorted(picks)]
        init = Identifier(class_id=class_id, embedding=np.zeros(4))
        if steps == 0:
            return InversionResult(embedding=init.embedding.copy(),
                                   loss_trace=[], timestep_violations=0)
        # each embedding coordinate aggregates numel/4 pixel gradients, so
        # scaling the rate by 1/numel makes convergence size-independent;
        # the 1024 reference makes the client's 400-step/1e-4 default land
        # well inside the converged, still-stable regime
        mean_numel = float(np.mean([t.size for t in tensors]))
        lr_eff = lr * 1024.0 / max(mean_numel, 1.0)
        den = ToyGaussianDenoiser(self.sched, sigma0=self.sigma0)
        result = ti_train(init, tensors, strength, den, self.sched,
                          steps=steps, lr=lr_eff, rng=rng)
        cut = truncation_index(strength, self.sched)
        violations = sum(1 for t in result.timesteps if t > cut)
        log.info("inversion class=%s steps=%s truncation=%s violations=%d",
                 class_id, steps, cut, violations)
        assert violations == 0
        return InversionResult(embedding=result.identifier.embedding,
                               loss_trace=result.losses,
                               timestep_violations=violations)

    def edit(self, sprite: np.ndarray, class_id: int, embedding: np.ndarray,
             strength: float, seed: int) -> np.ndarray:
        ident = Identifier(class_id=class_id, embedding=embedding)
        return edit_sprite_toy(sprite, ident, strength, seed, self.sched,
                               sigma0=self.sigma0)
