import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cddlab.models import ModelConfig


@pytest.fixture
def micro_config():
    """Double-precision config with < 500 trainable student parameters."""
    return ModelConfig(image_size=8, level_channels=(2, 3, 4), bottleneck_width=3,
                       dtype="float64")


@pytest.fixture
def small_config():
    """Small but non-degenerate single-precision config."""
    return ModelConfig(image_size=16, level_channels=(4, 8, 12), bottleneck_width=8)
