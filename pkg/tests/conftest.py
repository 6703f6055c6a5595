import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


def _fmt(v):
    return f"{v:.3e}" if isinstance(v, float) else str(v)


@pytest.fixture
def acceptance(request):
    """``report(number, title, items)`` records one pass/fail line per criterion.

    ``items`` are ``(label, observed, bound, ok)`` tuples.
    """
    lines = request.config.stash[_LINES]

    def report(number, title, items):
        ok = all(i[3] for i in items)
        failed = [i for i in items if not i[3]]
        shown = failed or items
        detail = "; ".join(f"{lab} = {_fmt(obs)} (want {bound})" for lab, obs, bound, _ in shown[:4])
        more = f" [+{len(shown) - 4} more]" if len(shown) > 4 else ""
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}{more}"
        lines.append((number, line))
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
