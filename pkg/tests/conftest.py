from pathlib import Path

import pytest

from layerworld.config import defaults

DATA = Path(__file__).parent / "data"


@pytest.fixture
def glider_rle():
    return DATA / "glider.rle"


@pytest.fixture
def small_cfg(tmp_path):
    """A fast 8x8 world (four agents) with metrics on short windows."""
    return defaults().replace(
        substrate={"width": 8, "height": 8, "init": "random"},
        agents={"hidden": 8, "latent_dim": 6},
        comm={"kappa": 2, "codebook_period": 8},
        metrics={"window": 64, "stride": 16, "mi_min_samples": 32, "r_batch": 16, "lags": (1, 4)},
        run={"ticks": 100, "output_dir": str(tmp_path / "out")},
    )


_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion: ``criterion(n, title)`` returns a reporter
    called as ``report(ok, detail)``. A test that raises before reporting is
    recorded as failed."""
    results = request.config.stash[_RESULTS]
    state = {}

    def start(number, title):
        state.update(number=number, title=title)

        def report(ok, detail=""):
            state["done"] = True
            line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}  {detail}".rstrip()
            results.append((number, line))
            print(line)
            return ok

        return report

    yield start
    if state and not state.get("done"):
        results.append((state["number"],
                        f"criterion {state['number']:>2} FAIL  {state['title']}  (error before check)"))


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, [])
    if results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(results):
            terminalreporter.write_line(line)
