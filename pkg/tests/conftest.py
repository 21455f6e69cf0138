from __future__ import annotations

import itertools

import pytest

from edgarcorpus.testing import MockEdgarServer

from helpers import copy_corpus, load_manifest


@pytest.fixture(scope="session")
def manifest():
    return load_manifest()


@pytest.fixture
def corpus_dir(tmp_path):
    return copy_corpus(tmp_path / "archive")


@pytest.fixture
def server(corpus_dir):
    with MockEdgarServer(corpus_dir) as srv:
        yield srv


@pytest.fixture(scope="session")
def shared_server(tmp_path_factory):
    """Read-only mock archive shared by tests that never mutate the fixture tree."""
    root = copy_corpus(tmp_path_factory.mktemp("shared") / "archive")
    with MockEdgarServer(root) as srv:
        yield srv


@pytest.fixture(scope="session")
def s3_endpoint():
    from moto.server import ThreadedMotoServer

    moto = ThreadedMotoServer(ip_address="127.0.0.1", port=0, verbose=False)
    moto.start()
    host, port = moto.get_host_and_port()
    yield f"http://127.0.0.1:{port}"
    moto.stop()


_buckets = itertools.count()


def make_s3_store(endpoint, tmp_path):
    from edgarcorpus.object_store import ObjectStore, S3Backend

    backend = S3Backend(f"test-bucket-{next(_buckets)}", endpoint_url=endpoint, access_key="test",
                        secret_key="test", lock_dir=str(tmp_path / "locks"), create_bucket=True)
    return ObjectStore(backend)


@pytest.fixture(params=["filesystem", pytest.param("s3", marks=pytest.mark.s3)])
def any_store(request, tmp_path):
    """An empty object store on each backend."""
    from edgarcorpus.object_store import ObjectStore

    if request.param == "filesystem":
        return ObjectStore.filesystem(tmp_path / "objects")
    return make_s3_store(request.getfixturevalue("s3_endpoint"), tmp_path)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_RESULTS

    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
