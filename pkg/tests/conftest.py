import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fightdet.frames import Frame, write_frame_dir  # noqa: E402


@pytest.fixture
def frame_dir(tmp_path):
    """Factory writing ``n`` RGB frames of size w x h whose brightness ramps with the index."""

    def make(n=20, w=16, h=16, name="clip"):
        frames = []
        for i in range(n):
            px = np.zeros((h, w, 3), dtype=np.uint8)
            px[..., 0] = (i * 12) % 256
            px[..., 1] = (np.arange(w)[None, :] * 8) % 256
            px[..., 2] = (np.arange(h)[:, None] * 8) % 256
            frames.append(Frame(px))
        path = tmp_path / name
        write_frame_dir(frames, path)
        return path

    return make


# criterion number -> (description, passed); filled in by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        desc, ok = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {n:>2}: {desc}")
