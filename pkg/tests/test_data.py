import numpy as np
import pytest

from recpoison import (
    AttackBudget,
    attack_budget,
    load_dataset,
    load_interactions,
    popularity_ranking,
    save_dataset,
    select_target_items,
    split_dataset,
)
from recpoison.synthetic import make_synthetic


def _write(tmp_path, text, name="inter.csv"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestLoad:
    def test_basic_counts(self, tmp_path):
        ds = load_interactions(_write(tmp_path, "a,x\na,y\nb,x\n"))
        assert ds.n_users == 2
        assert ds.n_items == 2
        assert ds.n_interactions == 3

    def test_duplicates_collapse(self, tmp_path):
        ds = load_interactions(_write(tmp_path, "a,x\na,x\na,x\nb,y\n"))
        assert ds.n_interactions == 2

    def test_first_appearance_indexing(self, tmp_path):
        ds = load_interactions(_write(tmp_path, "b,y\na,x\n"))
        assert ds.user_ids == ["b", "a"]
        assert ds.item_ids == ["y", "x"]

    def test_tab_autodetect(self, tmp_path):
        ds = load_interactions(_write(tmp_path, "a\tx\nb\ty\n"))
        assert ds.n_interactions == 2

    def test_extra_fields_ignored(self, tmp_path):
        ds = load_interactions(_write(tmp_path, "a,x,5,123456\nb,y,1,9\n"))
        assert ds.n_interactions == 2

    def test_malformed_line_reports_number(self, tmp_path):
        path = _write(tmp_path, "a,x\njunkline\nb,y\n")
        with pytest.raises(ValueError, match="line 2"):
            load_interactions(path)

    def test_empty_file_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="no interactions"):
            load_interactions(_write(tmp_path, "\n\n"))

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="nowhere.csv"):
            load_interactions(str(tmp_path / "nowhere.csv"))

    def test_blank_lines_skipped(self, tmp_path):
        ds = load_interactions(_write(tmp_path, "a,x\n\n\nb,y\n"))
        assert ds.n_interactions == 2


class TestSplit:
    def test_ten_interactions_split_7_1_2(self, tmp_path):
        lines = "".join(f"u,i{k}\n" for k in range(10))
        ds = split_dataset(load_interactions(_write(tmp_path, lines)))
        assert (len(ds.train), len(ds.valid), len(ds.test)) == (7, 1, 2)

    def test_partition_preserves_pairs(self, small_ds):
        raw = make_synthetic(40, 30, seed=7, mean_degree=9.0, min_degree=5, max_degree=16)
        got = {tuple(p) for p in small_ds.all_pairs()}
        want = {tuple(p) for p in raw.all_pairs()}
        assert got == want

    def test_deterministic(self, tmp_path):
        raw = make_synthetic(20, 15, seed=3)
        a = split_dataset(raw, seed=9)
        b = split_dataset(raw, seed=9)
        assert np.array_equal(a.train, b.train)
        assert np.array_equal(a.valid, b.valid)
        assert np.array_equal(a.test, b.test)
        assert a.fingerprint == b.fingerprint

    def test_seed_changes_split(self):
        raw = make_synthetic(20, 15, seed=3)
        a = split_dataset(raw, seed=0)
        b = split_dataset(raw, seed=1)
        assert a.fingerprint != b.fingerprint

    def test_global_sizes_within_one(self):
        raw = make_synthetic(50, 80, seed=11, mean_degree=20.0, min_degree=10, max_degree=40)
        ds = split_dataset(raw, seed=4)
        n = ds.n_interactions
        for part, ratio in zip((ds.train, ds.valid, ds.test), (0.7, 0.1, 0.2)):
            assert abs(len(part) - ratio * n) <= 1.0

    def test_small_users_stay_in_train(self, tmp_path):
        ds = split_dataset(load_interactions(_write(tmp_path, "a,x\na,y\nb,z\n")))
        assert len(ds.train) == 3
        assert len(ds.valid) == 0
        assert len(ds.test) == 0

    def test_bad_ratios_rejected(self, tiny_ds):
        with pytest.raises(ValueError, match="sum to 1"):
            split_dataset(tiny_ds, ratios=(0.5, 0.2, 0.2))
        with pytest.raises(ValueError, match="non-negative"):
            split_dataset(tiny_ds, ratios=(1.2, -0.1, -0.1))


class TestPopularityAndTargets:
    def test_popularity_counts(self, tiny_ds):
        pop = tiny_ds.item_popularity
        assert pop.tolist() == [3, 3, 3, 1, 1, 2, 1, 1]
        assert pop.sum() == len(tiny_ds.train)

    def test_ranking_ties_break_low_index(self, tiny_ds):
        ranked = popularity_ranking(tiny_ds)
        assert ranked.tolist() == [0, 1, 2, 5, 3, 4, 6, 7]

    def test_targets_avoid_top_fifth(self):
        ds = make_synthetic(60, 50, seed=5)
        top = set(popularity_ranking(ds)[: int(0.2 * ds.n_items)].tolist())
        for seed in range(20):
            targets = select_target_items(ds, n=5, seed=seed)
            assert len(np.unique(targets)) == 5
            assert not (set(targets.tolist()) & top)

    def test_targets_deterministic(self):
        ds = make_synthetic(60, 50, seed=5)
        assert np.array_equal(select_target_items(ds, 4, seed=2),
                              select_target_items(ds, 4, seed=2))

    def test_zero_targets(self, tiny_ds):
        assert len(select_target_items(tiny_ds, n=0)) == 0

    def test_too_many_targets_rejected(self, tiny_ds):
        with pytest.raises(ValueError, match="pool"):
            select_target_items(tiny_ds, n=100)


class TestBudget:
    def test_user_count_ceil(self):
        ds = make_synthetic(200, 50, seed=1)
        b = attack_budget(ds, 0.01, target_items=[3])
        assert b.n_malicious == 2

    def test_per_user_floor(self, tmp_path):
        # 100 users, 500 train interactions -> floor(5) = 5
        lines = "".join(f"u{u},i{k}\n" for u in range(100) for k in range(5))
        ds = load_interactions(_write(tmp_path, lines))
        b = attack_budget(ds, 0.05, target_items=[0, 1])
        assert b.per_user_budget == 5

    def test_budget_raised_to_target_count(self, tmp_path):
        lines = "".join(f"u{u},i{k}\n" for u in range(10) for k in range(3))
        ds = load_interactions(_write(tmp_path, lines))
        b = attack_budget(ds, 0.1, target_items=[0, 1, 2, 3, 4])
        assert b.per_user_budget == 5

    def test_nonpositive_fraction_rejected(self, tiny_ds):
        with pytest.raises(ValueError, match="positive"):
            attack_budget(tiny_ds, 0.0, target_items=[1])

    def test_budget_below_targets_rejected(self):
        with pytest.raises(ValueError, match="target"):
            AttackBudget(n_malicious=1, per_user_budget=2, target_items=[1, 2, 3])


class TestPersistence:
    def test_round_trip(self, small_ds, tmp_path):
        out = tmp_path / "ds"
        save_dataset(small_ds, str(out))
        back = load_dataset(str(out))
        assert back.fingerprint == small_ds.fingerprint
        assert back.user_ids == list(small_ds.user_ids)
        assert np.array_equal(back.train, small_ds.train)

    def test_missing_dir_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="mapping.json"):
            load_dataset(str(tmp_path / "nope"))
