import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cotrain.data import (
    DomainTag,
    SamplePool,
    chunk_episode,
    compose_batch,
    human_count,
    read_dataset,
    split_by_domain,
    write_dataset,
)
from cotrain.errors import ConfigError, DatasetError

from conftest import HUMAN_DIMS, ROBOT_DIMS, make_episode, make_factors


def write(tmp_path, episodes, name="ds"):
    return write_dataset(episodes, tmp_path / name, ROBOT_DIMS, HUMAN_DIMS)


class TestWriteRead:
    def test_manifest_counts(self, tmp_path):
        eps = [
            make_episode(DomainTag.SIM, seed=1),
            make_episode(DomainTag.HUMAN, seed=2),
            make_episode(DomainTag.SIM, seed=3),
        ]
        summary = write(tmp_path, eps)
        assert summary["episodes"] == 3
        assert summary["by_domain"] == {"SIM": 2, "HUMAN": 1}
        lines = (tmp_path / "ds" / "manifest.tsv").read_text().splitlines()
        assert len(lines) == 4  # header + 3 rows

    def test_length_mismatch_names_episode(self, tmp_path):
        good = make_episode(seed=1)
        bad = make_episode(seed=2)
        bad.actions = bad.actions[:-1]
        with pytest.raises(DatasetError, match="episode 1"):
            write(tmp_path, [good, bad])

    def test_roundtrip_identity(self, tmp_path):
        eps = [
            make_episode(DomainTag.SIM, T=5, seed=1),
            make_episode(DomainTag.HUMAN, T=7, seed=2, factors=make_factors(bg="wood")),
            make_episode(DomainTag.REAL, T=4, seed=3),
        ]
        write(tmp_path, eps)
        back = read_dataset(tmp_path / "ds")
        assert len(back) == len(eps)
        for a, b in zip(eps, back):
            assert a.domain is b.domain
            assert a.task == b.task
            assert a.factors == b.factors
            assert a.frequency_hz == b.frequency_hz
            np.testing.assert_array_equal(a.observations, b.observations)
            np.testing.assert_array_equal(a.states, b.states)
            np.testing.assert_array_equal(a.actions, b.actions)

    def test_rewrite_is_byte_identical(self, tmp_path):
        eps = [make_episode(seed=5), make_episode(DomainTag.HUMAN, seed=6)]
        write(tmp_path, eps, "a")
        write(tmp_path, eps, "b")
        for f in sorted(p.name for p in (tmp_path / "a").iterdir()):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError, match="manifest"):
            read_dataset(tmp_path / "nope")

    def test_corrupt_episode_file_named(self, tmp_path):
        write(tmp_path, [make_episode(seed=1)])
        target = tmp_path / "ds" / "ep_000000.npz"
        target.write_bytes(b"garbage")
        with pytest.raises(DatasetError, match="ep_000000"):
            read_dataset(tmp_path / "ds")

    def test_empty_dataset(self, tmp_path):
        write(tmp_path, [])
        assert read_dataset(tmp_path / "ds") == []


class TestFiltering:
    def setup_episodes(self, tmp_path):
        bgs = ["base", "wood", "checker", "dots"]
        eps = [
            make_episode(DomainTag.HUMAN, seed=i, factors=make_factors(bg=bgs[i % 4]))
            for i in range(8)
        ]
        write(tmp_path, eps)
        return eps

    def test_filter_by_bg(self, tmp_path):
        self.setup_episodes(tmp_path)
        got = read_dataset(tmp_path / "ds", filter=lambda d, t, f: f.bg == "base")
        assert len(got) == 2
        assert all(ep.factors.bg == "base" for ep in got)

    def test_leave_one_factor_out_subset(self, tmp_path):
        # holding out background diversity keeps only the base-bg episodes
        eps = self.setup_episodes(tmp_path)
        kept = read_dataset(tmp_path / "ds", filter=lambda d, t, f: f.bg == "base")
        excluded = [ep for ep in eps if ep.factors.bg != "base"]
        assert len(kept) + len(excluded) == len(eps)
        assert {ep.factors.bg for ep in kept} == {"base"}

    def test_partition_union_is_identity(self, tmp_path):
        self.setup_episodes(tmp_path)
        total = 0
        for bg in ["base", "wood", "checker", "dots"]:
            total += len(read_dataset(tmp_path / "ds", filter=lambda d, t, f, b=bg: f.bg == b))
        assert total == len(read_dataset(tmp_path / "ds"))


class TestChunking:
    def test_padding_repeats_last_action(self):
        ep = make_episode(T=3, seed=0)
        samples = chunk_episode(ep, horizon=5)
        assert len(samples) == 3
        last = samples[-1]
        assert last.action_chunk.shape == (5, 8)
        np.testing.assert_array_equal(last.action_chunk[0], ep.actions[2])
        for k in range(1, 5):
            np.testing.assert_array_equal(last.action_chunk[k], ep.actions[2])
        np.testing.assert_array_equal(last.pad_mask, [False, True, True, True, True])

    def test_no_padding_when_chunk_fits(self):
        ep = make_episode(T=8, seed=0)
        s = chunk_episode(ep, horizon=4)[0]
        assert not s.pad_mask.any()
        np.testing.assert_array_equal(s.action_chunk, ep.actions[0:4])


def make_pools():
    sim = SamplePool.from_episodes([make_episode(DomainTag.SIM, T=4, seed=s) for s in range(3)], 4)
    hum = SamplePool.from_episodes(
        [make_episode(DomainTag.HUMAN, T=4, seed=s + 10) for s in range(3)], 4
    )
    return sim, hum


class TestComposeBatch:
    def test_half_split(self):
        sim, hum = make_pools()
        batch = compose_batch(sim, hum, 64, 0.5, np.random.default_rng(0))
        by = split_by_domain(batch)
        assert len(by[DomainTag.HUMAN]) == 32
        assert len(by[DomainTag.SIM]) == 32

    def test_alpha_zero_boundary(self):
        sim, _ = make_pools()
        batch = compose_batch(sim, None, 64, 0.0, np.random.default_rng(0))
        assert all(s.domain is DomainTag.SIM for s in batch)

    def test_round_half_up(self):
        # hand-enumerated: alpha*B = 2.5 -> floor(2.5 + 0.5) = 3 human
        sim, hum = make_pools()
        batch = compose_batch(sim, hum, 10, 0.25, np.random.default_rng(1))
        by = split_by_domain(batch)
        assert len(by[DomainTag.HUMAN]) == 3
        assert len(by[DomainTag.SIM]) == 7

    def test_counts_exact_over_many_batches(self):
        sim, hum = make_pools()
        rng = np.random.default_rng(7)
        for _ in range(200):
            by = split_by_domain(compose_batch(sim, hum, 16, 0.25, rng))
            assert len(by[DomainTag.HUMAN]) == 4

    def test_alpha_out_of_range(self):
        sim, hum = make_pools()
        with pytest.raises(ConfigError, match="alpha"):
            compose_batch(sim, hum, 8, 1.5, np.random.default_rng(0))

    def test_empty_required_pool(self):
        sim, _ = make_pools()
        with pytest.raises(ConfigError, match="human pool"):
            compose_batch(sim, None, 8, 0.5, np.random.default_rng(0))

    def test_deterministic_given_seed(self):
        sim, hum = make_pools()
        b1 = compose_batch(sim, hum, 12, 0.5, np.random.default_rng(3))
        b2 = compose_batch(sim, hum, 12, 0.5, np.random.default_rng(3))
        for s1, s2 in zip(b1, b2):
            assert s1.domain is s2.domain
            np.testing.assert_array_equal(s1.action_chunk, s2.action_chunk)

    @given(
        alpha=st.floats(min_value=0.0, max_value=1.0),
        B=st.integers(min_value=1, max_value=256),
    )
    @settings(max_examples=200, deadline=None)
    def test_rounding_rule(self, alpha, B):
        n = human_count(B, alpha)
        assert n == int(np.floor(alpha * B + 0.5))
        assert 0 <= n <= B
