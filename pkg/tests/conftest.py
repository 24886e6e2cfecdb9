import json
from pathlib import Path

import numpy as np
import pytest

from hirc.core.diagnostics import Severity
from hirc.frontend.parser import parse, parse_or_raise

CORPUS = Path(__file__).resolve().parent.parent / "corpus"

KERNELS = ["transpose", "array_add", "mac_ok", "stencil_1d", "task_parallel", "histogram", "gemm",
           "convolution", "fifo", "unroll_loop", "delays"]

# kernels that share an inputs file with another design
INPUT_FILES = {"mac_ok": "mac"}

SEEDS = range(50)


def corpus_path(name: str) -> Path:
    return CORPUS / f"{name}.hir"


def load(name: str):
    path = corpus_path(name)
    return parse_or_raise(path.read_text(encoding="utf-8"), str(path))


def load_inputs(name: str) -> dict:
    name = INPUT_FILES.get(name, name)
    return json.loads((CORPUS / f"{name}.json").read_text(encoding="utf-8"))


def parse_text(text: str):
    """Parse inline source; fails the test on any error diagnostic."""
    module, diags = parse(text, "test.hir")
    errors = [d for d in diags if d.severity is Severity.ERROR]
    assert not errors, "\n".join(d.format() for d in errors)
    return module


def classes(diags, severity=Severity.ERROR) -> list[str]:
    return [d.error_class.value for d in diags if d.severity is severity]


def wrap32(x: int) -> int:
    return ((int(x) + 2**31) % 2**32) - 2**31


@pytest.fixture
def corpus_dir() -> Path:
    return CORPUS


def fir(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    y = x.copy()
    y[1:] += 2 * x[:-1]
    y[2:] += 3 * x[:-2]
    return y


def _convolve(img, ker) -> list:
    img, ker = np.asarray(img, dtype=np.int64), np.asarray(ker, dtype=np.int64)
    return [[int((img[r:r + 3, c:c + 3] * ker).sum()) for c in range(6)] for r in range(6)]


def random_inputs(name: str, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    if name == "transpose":
        tensors = {"A": rng.integers(-2**31, 2**31, size=(8, 8))}
    elif name == "stencil_1d":
        tensors = {"x": rng.integers(-10_000, 10_000, size=64)}
    elif name == "histogram":
        tensors = {"x": rng.integers(0, 1000, size=64), "h": rng.integers(-50, 50, size=16)}
    elif name == "gemm":
        tensors = {k: rng.integers(-1000, 1000, size=(16, 16)) for k in "AB"}
    elif name == "convolution":
        tensors = {"img": rng.integers(-1000, 1000, size=(8, 8)), "ker": rng.integers(-9, 10, size=(3, 3))}
    else:
        raise KeyError(name)
    return {"tensors": {k: v.tolist() for k, v in tensors.items()}}


# output tensor and its expected contents, computed with numpy
ORACLES = {
    "transpose": ("C", lambda t: np.asarray(t["A"]).T.tolist()),
    "stencil_1d": ("y", lambda t: fir(t["x"]).tolist()),
    "histogram": ("h", lambda t: np.bincount(np.asarray(t["x"]) & 15, minlength=16).tolist()),
    "gemm": ("C", lambda t: (np.asarray(t["A"], dtype=np.int64) @ np.asarray(t["B"], dtype=np.int64)).tolist()),
    "convolution": ("out", lambda t: _convolve(t["img"], t["ker"])),
}

RANDOM_CASES = [(name, seed) for name in ORACLES for seed in SEEDS]


def expected_output(name: str, inputs: dict) -> tuple[str, list]:
    out, oracle = ORACLES[name]
    return out, oracle(inputs["tensors"])
