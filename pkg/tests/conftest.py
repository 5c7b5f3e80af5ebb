import numpy as np
import pytest

from metatune.envs import gridworld_env


def value_iteration(tables, gamma, tol=1e-12, max_iter=100_000):
    """Optimal Q-values of a deterministic tabular MDP (terminal states absorb)."""
    ns, r, term = tables.next_state, tables.reward, tables.terminal.astype(bool)
    V = np.zeros(tables.n_states)
    for _ in range(max_iter):
        Q = r + gamma * np.where(term[ns], 0.0, V[ns])
        V_new = np.where(term, 0.0, Q.max(axis=1))
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    Q = r + gamma * np.where(term[ns], 0.0, V[ns])
    return Q, V


def optimal_action_sets(Q, terminal, atol=1e-9):
    return {s: set(np.flatnonzero(Q[s] >= Q[s].max() - atol)) for s in range(Q.shape[0])
            if not terminal[s]}


@pytest.fixture
def grid5():
    return gridworld_env(5, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    from metatune.agents.runner import EnvConfig
    from metatune.config import ExperimentConfig
    return ExperimentConfig(name="small", env=EnvConfig("deep_sea", {"N": 5}), meta_episodes=4,
                            train_episodes=60, m=3, rollout_episodes=4, candidate_batch=50,
                            n_evals=4, eval_episodes=2, seeds=(0, 1))


CRITERIA_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert."""
    def report(number: int, ok: bool, detail: str):
        line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        CRITERIA_LINES.append(line)
        print(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES):
            terminalreporter.write_line(line)
