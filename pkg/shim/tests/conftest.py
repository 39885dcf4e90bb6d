import threading

import pytest

from detector_shim.server import make_server


@pytest.fixture
def shim_server():
    """Start a shim for one test: `with_model(wrapper)` returns its URL."""
    started = []

    def with_model(wrapper):
        server = make_server(wrapper)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        started.append((server, thread))
        return server.url

    yield with_model
    for server, thread in started:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)
