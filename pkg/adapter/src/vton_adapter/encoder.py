"""Frozen image encoders behind one interface.

The default "stub" encoder is a small seeded convolutional network: no
downloaded weights, deterministic on CPU, and honest about being a
stand-in — swap in a real backbone by pointing --torchscript at any
scripted module mapping (1, 3, 224, 224) float input to (1, D) features.
Inference mode with deterministic preprocessing either way.
"""

from __future__ import annotations

import numpy as np
import torch
from PIL import Image
from torch import nn

INPUT_SIZE = 224
STUB_DIMENSION = 256
STUB_SEED = 0x5EED
LPIPS_LAYERS = ("conv1", "conv2", "conv3")


class StubEncoder(nn.Module):
    def __init__(self, dimension: int = STUB_DIMENSION):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 16, kernel_size=3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(16, 32, kernel_size=3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(32, 64, kernel_size=3, stride=2, padding=1)
        self.head = nn.Linear(64, dimension)
        self.act = nn.ReLU()

    def forward(self, x):
        f1 = self.act(self.conv1(x))
        f2 = self.act(self.conv2(f1))
        f3 = self.act(self.conv3(f2))
        pooled = f3.mean(dim=(2, 3))
        return self.head(pooled), {"conv1": f1, "conv2": f2, "conv3": f3}


class Encoder:
    """Preprocess + forward; returns numpy float32 everywhere."""

    def __init__(self, kind: str = "stub", torchscript_path=None,
                 dimension: int = STUB_DIMENSION):
        self.kind = kind
        torch.manual_seed(STUB_SEED)
        if kind == "stub":
            self.model = StubEncoder(dimension)
        elif kind == "torchscript":
            if torchscript_path is None:
                raise ValueError("torchscript encoder needs a module path")
            self.model = torch.jit.load(torchscript_path, map_location="cpu")
        else:
            raise ValueError(f"unknown encoder kind {kind!r}")
        self.model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)

    def preprocess(self, image: np.ndarray) -> torch.Tensor:
        """Masking happens at native resolution BEFORE this resize."""
        pil = Image.fromarray(np.asarray(image, dtype=np.uint8))
        pil = pil.resize((INPUT_SIZE, INPUT_SIZE), Image.BILINEAR)
        arr = np.asarray(pil, dtype=np.float32) / 255.0
        arr = (arr - 0.5) / 0.5
        return torch.from_numpy(arr.transpose(2, 0, 1))[None, :]

    @torch.no_grad()
    def embed(self, image: np.ndarray) -> np.ndarray:
        out = self.model(self.preprocess(image))
        pooled = out[0] if isinstance(out, tuple) else out
        return pooled[0].numpy().astype(np.float32)

    @torch.no_grad()
    def layer_features(self, image: np.ndarray) -> dict:
        out = self.model(self.preprocess(image))
        if not isinstance(out, tuple):
            raise ValueError("this encoder does not expose layer features")
        return {name: feats[0].numpy().astype(np.float32)
                for name, feats in out[1].items()}

    def metadata(self) -> dict:
        return {
            "encoder": self.kind,
            "dimension": int(self.embed(np.zeros((8, 8, 3), np.uint8)).size),
            "preprocess": f"mask@native,resize{INPUT_SIZE}bilinear,scale[-1,1]",
            "seed": STUB_SEED if self.kind == "stub" else None,
        }
