import numpy as np
import pytest

from expmpc.config import ProtocolConfig
from expmpc.protocols import open_session, run_shares, secure_eval, share_reals


@pytest.fixture(scope="session")
def cfg64():
    return ProtocolConfig()


@pytest.fixture(scope="session")
def cfg128():
    return ProtocolConfig(ring_bits=128)


@pytest.fixture(scope="session")
def sess64(cfg64):
    s = open_session(cfg64)
    yield s
    s.close()


@pytest.fixture(scope="session")
def sess128(cfg128):
    s = open_session(cfg128)
    yield s
    s.close()


def evaluate(session, name, *inputs, seed=0):
    """Decoded protocol output for real inputs."""
    out, _ = secure_eval(session, name, *inputs, rng=np.random.default_rng(seed))
    return out


def run_program(session, program, *raw_inputs, seed=0):
    """Share raw ring inputs, run ``program`` and return the reconstructed raw output."""
    R = session.config.ring
    rng = np.random.default_rng(seed)
    s0, s1 = [], []
    for x in raw_inputs:
        a = R.random(rng, np.shape(x))
        s0.append(a)
        s1.append(R.sub(np.asarray(x, dtype=R.dtype), a))
    res = session.run(program, s0, s1)
    return R.add(res.outputs[0], res.outputs[1]), res.transcript


__all__ = ["evaluate", "run_program", "share_reals", "run_shares"]
