import pytest
import torch

from iste.model import ModelConfig


def tiny_config(**kwargs) -> ModelConfig:
    """Small-dimension model for fast tests and 64-bit gradient checks."""
    base = dict(
        channels=8,
        n_blocks=1,
        attn_dim=8,
        texture_channels=8,
        fusion_dim=8,
        phase_hidden=8,
        lpd_hidden=[8],
        ltd_hidden=[8],
        block_size=64,
        seed=7,
    )
    base.update(kwargs)
    return ModelConfig(**base)


# One human-readable verdict line per acceptance criterion, collected by
# test_acceptance.announce and echoed after the pytest summary (plain
# prints from passing tests are swallowed by output capture).
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return torch.Generator().manual_seed(1234)


@pytest.fixture(autouse=True)
def _fixed_global_seed():
    torch.manual_seed(0)
