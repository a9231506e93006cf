import pytest

from ruinless.risk_model import Exponential, ModelParams, Pareto, Reinsurance

ACCEPTANCE_LINES = []


def ex1():
    return ModelParams(mu=4, sigma=0.8, delta=1.5, r=0.1, c=1.1, K=0.2), Reinsurance.proportional()


def ex2():
    params, reins = ex1()
    return params.replace(delta=2.5), reins


def _xl(dist):
    return (
        ModelParams.from_claims(dist, delta=1.5, r=0.1, c=1.1, K=0.2),
        Reinsurance.excess_of_loss(dist),
    )


def ex3():
    return _xl(Exponential(0.5))


def ex4():
    return _xl(Pareto(3, 1))


EXAMPLES = {"ex1": ex1, "ex2": ex2, "ex3": ex3, "ex4": ex4}


@pytest.fixture(params=sorted(EXAMPLES))
def example(request):
    return EXAMPLES[request.param]()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
