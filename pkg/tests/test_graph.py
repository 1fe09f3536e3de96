import numpy as np
import pytest

from caf.errors import ConfigError
from caf.graph import (
    build_network,
    spatial_mask,
    temporal_mask,
    validate_assumptions,
)

from conftest import river_config


class TestBuildNetwork:
    def test_river_network_shape(self, river_net):
        assert river_net.p == 16
        assert [c.size for c in river_net.clusters] == [3, 1, 5, 7]
        assert river_net.edges == frozenset({(1, 3), (1, 4), (2, 4), (3, 4)})

    def test_single_cluster_no_edges(self):
        net = build_network(
            {
                "clusters": [{"name": "only", "variables": ["x", "y"]}],
                "edges": [],
                "target_variable": "y",
            }
        )
        assert net.p == 2
        assert net.edges == frozenset()

    def test_edges_deduplicated(self):
        net = build_network(
            {
                "clusters": [
                    {"name": "a", "variables": ["x"]},
                    {"name": "b", "variables": ["y"]},
                ],
                "edges": [["a", "b"], ["a", "b"]],
                "target_variable": "y",
            }
        )
        assert len(net.edges) == 1

    def test_duplicate_variable_rejected(self):
        with pytest.raises(ConfigError, match="duplicate variable"):
            build_network(
                {
                    "clusters": [
                        {"name": "a", "variables": ["x"]},
                        {"name": "b", "variables": ["x"]},
                    ],
                    "edges": [],
                    "target_variable": "x",
                }
            )

    def test_unknown_edge_endpoint_rejected(self):
        with pytest.raises(ConfigError, match="unknown cluster"):
            build_network(
                {
                    "clusters": [{"name": "a", "variables": ["x"]}],
                    "edges": [["a", "zz"]],
                    "target_variable": "x",
                }
            )

    def test_self_edge_rejected(self):
        with pytest.raises(ConfigError, match="self-edge"):
            build_network(
                {
                    "clusters": [{"name": "a", "variables": ["x"]}],
                    "edges": [["a", "a"]],
                    "target_variable": "x",
                }
            )

    def test_unknown_top_level_key_rejected(self):
        cfg = river_config()
        cfg["extra"] = 1
        with pytest.raises(ConfigError, match="unknown config keys"):
            build_network(cfg)

    def test_unknown_target_rejected(self):
        cfg = river_config()
        cfg["target_variable"] = "nope"
        with pytest.raises(ConfigError, match="target_variable"):
            build_network(cfg)


class TestSpatialMask:
    def test_block_into_cause(self, river_net):
        mask = spatial_mask(river_net)
        blocks = river_net.partition()
        # bridges (cluster 4) may attend to the estuary (cluster 2): 2 -> 4 declared
        rows, cols = blocks[3], blocks[1]
        assert mask.permit[rows.start : rows.stop, cols.start : cols.stop].all()

    def test_block_without_cause_forbidden(self, river_net):
        mask = spatial_mask(river_net)
        blocks = river_net.partition()
        # rain (cluster 1) has no declared cause, so it must not see the bridges
        rows, cols = blocks[0], blocks[3]
        assert not mask.permit[rows.start : rows.stop, cols.start : cols.stop].any()

    def test_diagonal_blocks_always_permitted(self, river_net):
        mask = spatial_mask(river_net)
        for block in river_net.partition():
            sub = mask.permit[block.start : block.stop, block.start : block.stop]
            assert sub.all()

    def test_block_structure(self, river_net):
        # all cells of one (I_s, I_s') block agree
        mask = spatial_mask(river_net)
        for rb in river_net.partition():
            for cb in river_net.partition():
                sub = mask.permit[rb.start : rb.stop, cb.start : cb.stop]
                assert sub.all() or not sub.any()

    def test_river_mask_row_pattern(self, river_net):
        mask = spatial_mask(river_net)
        # expected permitted column blocks per row block: 1:{1}, 2:{2}, 3:{1,3}, 4:{all}
        expected = {1: {1}, 2: {2}, 3: {1, 3}, 4: {1, 2, 3, 4}}
        blocks = river_net.partition()
        for s, cols_allowed in expected.items():
            rb = blocks[s - 1]
            for sp in range(1, 5):
                cb = blocks[sp - 1]
                sub = mask.permit[rb.start : rb.stop, cb.start : cb.stop]
                assert sub.all() == (sp in cols_allowed)

    def test_independent_of_time(self, river_net):
        # one matrix serves every step: repeated compilation is identical
        m1 = spatial_mask(river_net)
        m2 = spatial_mask(river_net)
        assert np.array_equal(m1.permit, m2.permit)


class TestTemporalMask:
    def test_n1(self):
        mask = temporal_mask(1)
        assert mask.permit.tolist() == [[True]]

    def test_n3_lower_triangle(self):
        mask = temporal_mask(3)
        assert mask.permit_count() == 6
        assert np.array_equal(mask.permit, np.tril(np.ones((3, 3), dtype=bool)))

    def test_n60_count(self):
        n = 60  # history 48 plus horizon 12
        mask = temporal_mask(n)
        assert mask.permit_count() == n * (n + 1) // 2  # 1830

    @pytest.mark.parametrize("n", range(1, 12))
    def test_count_formula(self, n):
        assert temporal_mask(n).permit_count() == n * (n + 1) // 2

    def test_diagonal_always_permitted(self):
        mask = temporal_mask(7)
        assert mask.permit.diagonal().all()

    def test_zero_rejected(self):
        with pytest.raises(ConfigError):
            temporal_mask(0)


class TestValidateAssumptions:
    def test_river_network_clean(self, river_net):
        report = validate_assumptions(river_net)
        assert report.acyclic
        assert report.unreachable_clusters == []
        assert report.ok

    def test_cycle_warns(self):
        net = build_network(
            {
                "clusters": [
                    {"name": "a", "variables": ["x"]},
                    {"name": "b", "variables": ["y"]},
                ],
                "edges": [["a", "b"], ["b", "a"]],
                "target_variable": "y",
            }
        )
        report = validate_assumptions(net)
        assert not report.acyclic
        assert any("cycle" in w for w in report.warnings)

    def test_isolated_cluster_warns(self):
        net = build_network(
            {
                "clusters": [
                    {"name": "a", "variables": ["x"]},
                    {"name": "b", "variables": ["y"]},
                    {"name": "lonely", "variables": ["z"]},
                ],
                "edges": [["a", "b"]],
                "target_variable": "y",
            }
        )
        report = validate_assumptions(net)
        assert report.acyclic
        assert report.unreachable_clusters == ["lonely"]
