import itertools
import os
import socket

import pytest

_next_slot = itertools.count()


def _range_free(base: int, count: int) -> bool:
    socks = []
    try:
        for port in range(base, base + count):
            s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            s.bind(("127.0.0.1", port))
            socks.append(s)
        return True
    except OSError:
        return False
    finally:
        for s in socks:
            s.close()


def alloc_base_port(count: int = 16) -> int:
    """A base port whose following `count` ports are currently free.

    Each call hands out a fresh slot so parallel federations in one test
    session never collide; the pid offset keeps repeated sessions apart.
    """
    start = 21000 + (os.getpid() % 400) * 64
    for _ in range(2000):
        base = 20000 + (start - 20000 + next(_next_slot) * 16) % 40000
        if base + count <= 65535 and _range_free(base, count):
            return base
    raise RuntimeError("no free port range found")


@pytest.fixture
def base_port() -> int:
    return alloc_base_port()
