import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

MODE_STD = 0.1


def two_mode_means(size=8):
    a = np.zeros((size, size, 3))
    b = np.zeros((size, size, 3))
    a[:, : size // 2] = 1.0
    b[:, size // 2:] = 1.0
    return a, b


def two_mode_dataset(n=512, size=8, std=MODE_STD, seed=0):
    rng = np.random.default_rng(seed)
    means = two_mode_means(size)
    labels = rng.integers(0, 2, n)
    images = np.stack([means[k] for k in labels]) + rng.normal(0, std, (n, size, size, 3))
    return images, labels.tolist()


@pytest.fixture(scope="session")
def trained_tiny():
    from svgdistill.diffusion import TinyDenoiser, make_schedule

    images, labels = two_mode_dataset()
    model = TinyDenoiser((8, 8, 3), [0, 1], make_schedule(1000), seed=0)
    history = model.train(images, labels, steps=2000, batch=64, lr=1e-3, seed=0)
    return model, history


# acceptance criteria report one line each at the end of the run
ACCEPTANCE: dict[int, str] = {}


def record(n: int, title: str, ok: bool, detail: str, seconds: float) -> bool:
    ACCEPTANCE[n] = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {title} ({detail}; {seconds:.1f}s)"
    print(ACCEPTANCE[n])
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
