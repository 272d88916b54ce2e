import os

import pytest

from qadb.encoder import ReferenceEncoder
from qadb.index import INPUT_QUESTION, VectorIndex

from helpers import ClusterFixture, build_cluster_fixture

FIXTURE_DIM = 128
FIXTURE_SEED = 11


@pytest.fixture(scope="session")
def cluster_fixture(tmp_path_factory) -> ClusterFixture:
    root = tmp_path_factory.mktemp("cluster_fixture")
    return build_cluster_fixture(os.path.join(root, "store"), seed=FIXTURE_SEED)


@pytest.fixture(scope="session")
def cluster_encoder() -> ReferenceEncoder:
    return ReferenceEncoder(dim=FIXTURE_DIM, seed=0)


@pytest.fixture(scope="session")
def cluster_index(cluster_fixture, cluster_encoder, tmp_path_factory) -> VectorIndex:
    path = os.path.join(tmp_path_factory.mktemp("cluster_index"), "index.qaix")
    return VectorIndex.build(
        cluster_fixture.store.export_pairs(),
        cluster_encoder,
        path,
        input_config=INPUT_QUESTION,
    )
