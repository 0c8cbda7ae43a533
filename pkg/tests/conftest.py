import pytest

from chgh.synth import MarketSpec, market_corpus

TOY_SPEC = MarketSpec(n_skills=16, n_clusters_true=4, n_steps=12, docs_per_step=400, seed=0)


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """16 skills x 12 steps, built through the real pipeline."""
    out = tmp_path_factory.mktemp("toy")
    _, data = market_corpus(TOY_SPEC, out)
    data.path = out / "corpus"
    return data


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """``record(n, ok, detail, seconds)`` adds one PASS/FAIL line to the run summary."""

    def record(n, ok, detail, seconds):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail} [{seconds:.1f}s]"
        request.config.acceptance_lines.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
