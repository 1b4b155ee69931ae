import pytest

from grouprec.data import (
    AGE_BUCKETS,
    GroupingStrategy,
    IngestionError,
    SplitError,
    StrategyError,
    age_bucket,
    group_users,
    kfold_split,
    load_generic,
    load_movielens,
)
from grouprec.model import DataIntegrityError

from conftest import write_generic_csv


class TestAgeBucket:
    @pytest.mark.parametrize(
        "age,label",
        [
            (7, "below 21"), (20, "below 21"),
            (21, "21 to 30"), (30, "21 to 30"),
            (31, "31 to 40"), (40, "31 to 40"),
            (41, "41 to 50"), (50, "41 to 50"),
            (51, "above 50"), (90, "above 50"),
        ],
    )
    def test_boundaries(self, age, label):
        assert age_bucket(age) == label

    def test_labels_are_canonical(self):
        assert len(AGE_BUCKETS) == 5


class TestLoadGeneric:
    def test_round_trip(self, tmp_path, small_bundle):
        path = tmp_path / "ratings.csv"
        write_generic_csv(small_bundle, path)
        loaded = load_generic(str(path))
        assert loaded.catalog.n_users == small_bundle.catalog.n_users
        assert loaded.catalog.n_items == small_bundle.catalog.n_items
        assert len(loaded.ratings) == len(small_bundle.ratings)

    def test_dense_remapping(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("u9,movieX,4\nu2,movieX,5\nu9,movieY,1\n")
        b = load_generic(str(path))
        assert b.user_ids == ["u9", "u2"]
        assert b.item_ids == ["movieX", "movieY"]
        assert (b.ratings[0].user, b.ratings[0].item, b.ratings[0].rating) == (0, 0, 4)

    def test_custom_schema(self, tmp_path):
        path = tmp_path / "r.tsv"
        path.write_text("rating\tuser\titem\n5\ta\tx\n3\tb\ty\n")
        b = load_generic(
            str(path),
            schema={"delimiter": "\t", "user_col": 1, "item_col": 2, "rating_col": 0, "has_header": True},
        )
        assert len(b.ratings) == 2
        assert b.user_ids == ["a", "b"]

    def test_unknown_schema_key_rejected(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("a,x,3\n")
        with pytest.raises(IngestionError, match="unknown schema"):
            load_generic(str(path), schema={"sep": ","})

    def test_rating_out_of_scale(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("a,x,9\n")
        with pytest.raises(IngestionError, match="outside"):
            load_generic(str(path))

    def test_duplicate_pair(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("a,x,3\na,x,4\n")
        with pytest.raises(DataIntegrityError):
            load_generic(str(path))

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("a,x\n")
        with pytest.raises(IngestionError, match="malformed"):
            load_generic(str(path))

    def test_groups_and_tags_files(self, tmp_path):
        rp = tmp_path / "r.csv"
        rp.write_text("a,x,3\nb,y,4\n")
        gp = tmp_path / "g.csv"
        gp.write_text("a,red\nb,blue\n")
        tp = tmp_path / "t.csv"
        tp.write_text("x,comedy\nx,drama\ny,comedy\n")
        b = load_generic(str(rp), str(gp), str(tp))
        assert b.explicit_groups == {0: "red", 1: "blue"}
        assert b.tag_names == ["comedy", "drama"]
        assert b.catalog.item_tags(0) == frozenset({0, 1})
        assert b.catalog.item_tags(1) == frozenset({0})

    def test_groups_file_unknown_user(self, tmp_path):
        rp = tmp_path / "r.csv"
        rp.write_text("a,x,3\n")
        gp = tmp_path / "g.csv"
        gp.write_text("zzz,red\n")
        with pytest.raises(IngestionError, match="unknown user"):
            load_generic(str(rp), str(gp))


class TestLoadMovielens:
    def write_mini(self, d):
        (d / "u.item").write_text(
            "1|Film A (1995)|01-Jan-1995||http://x|0|1|0\n"
            "2|Film B (1996)|01-Jan-1996||http://x|1|0|0\n",
            encoding="latin-1",
        )
        (d / "u.user").write_text("1|24|M|technician|85711\n2|53|F|other|94043\n")
        (d / "u.data").write_text("1\t1\t5\t874965758\n2\t2\t3\t876893171\n1\t2\t4\t878542960\n")

    def test_mini_directory(self, tmp_path):
        self.write_mini(tmp_path)
        b = load_movielens(str(tmp_path))
        assert b.catalog.n_users == 2
        assert b.catalog.n_items == 2
        assert b.catalog.n_tags == 3
        assert b.catalog.item_tags(0) == frozenset({1})
        assert b.profiles[0] == {"gender": "M", "age": 24, "occupation": "technician"}
        assert len(b.ratings) == 3
        assert b.ratings[0].rating == 5

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestionError, match="missing dataset file"):
            load_movielens(str(tmp_path))

    def test_unknown_user_in_ratings(self, tmp_path):
        self.write_mini(tmp_path)
        (tmp_path / "u.data").write_text("99\t1\t5\t874965758\n")
        with pytest.raises(IngestionError, match="unknown"):
            load_movielens(str(tmp_path))


class TestGroupUsers:
    def test_occupation_partition(self, small_bundle):
        groups = group_users(small_bundle, GroupingStrategy("by_occupation"))
        all_members = set()
        for g in groups.values():
            assert not (all_members & g.members)
            all_members |= g.members
        assert all_members == set(range(small_bundle.catalog.n_users))
        assert len(groups) == 4  # one per synthetic cluster

    def test_gender_at_most_two_groups(self, small_bundle):
        groups = group_users(small_bundle, GroupingStrategy("by_gender"))
        assert 1 <= len(groups) <= 2

    def test_age_uses_buckets(self, small_bundle):
        groups = group_users(small_bundle, GroupingStrategy("by_age"))
        assert len(groups) <= len(AGE_BUCKETS)

    def test_missing_attribute_goes_to_unknown(self, small_bundle):
        del small_bundle.profiles[3]["occupation"]
        groups = group_users(small_bundle, GroupingStrategy("by_occupation"))
        assert len(groups) == 5
        unknowns = [g for g in groups.values() if 3 in g.members]
        assert len(unknowns) == 1 and unknowns[0].members == frozenset({3})

    def test_random_deterministic(self, small_bundle):
        s = GroupingStrategy("random", count=5, seed=3)
        a = group_users(small_bundle, s)
        b = group_users(small_bundle, s)
        assert {g: grp.members for g, grp in a.items()} == {
            g: grp.members for g, grp in b.items()
        }

    def test_random_needs_count(self):
        with pytest.raises(StrategyError):
            GroupingStrategy("random")

    def test_unknown_kind(self):
        with pytest.raises(StrategyError):
            GroupingStrategy("by_zodiac")

    def test_profiles_required(self, small_bundle):
        small_bundle.profiles = None
        with pytest.raises(StrategyError, match="profiles"):
            group_users(small_bundle, GroupingStrategy("by_gender"))

    def test_explicit_labels(self, small_bundle):
        small_bundle.explicit_groups = {
            u: "even" if u % 2 == 0 else "odd"
            for u in range(small_bundle.catalog.n_users)
        }
        groups = group_users(small_bundle, GroupingStrategy("explicit"))
        assert len(groups) == 2

    def test_associates_symmetric(self, small_bundle):
        groups = group_users(
            small_bundle,
            GroupingStrategy("by_occupation"),
            associates={"job0": {"job1"}},
        )
        by_label = {}
        for gid, grp in groups.items():
            member = next(iter(grp.members))
            by_label[small_bundle.profiles[member]["occupation"]] = grp
        g0, g1 = by_label["job0"], by_label["job1"]
        assert g1.id in g0.associates
        assert g0.id in g1.associates
        assert not by_label["job2"].associates

    def test_associates_unknown_label(self, small_bundle):
        with pytest.raises(StrategyError, match="matches no group"):
            group_users(
                small_bundle,
                GroupingStrategy("by_occupation"),
                associates={"nope": {"job1"}},
            )


class TestKfoldSplit:
    def test_partition(self, small_bundle):
        plan = kfold_split(small_bundle, 5, seed=0)
        seen = []
        for fold in plan.folds:
            seen.extend(fold)
        assert sorted(seen) == list(range(len(small_bundle.ratings)))

    def test_balanced_sizes(self, small_bundle):
        plan = kfold_split(small_bundle, 5, seed=0)
        sizes = [len(f) for f in plan.folds]
        assert max(sizes) - min(sizes) <= 1

    def test_test_sets_only_max_ratings(self, small_bundle):
        plan = kfold_split(small_bundle, 4, seed=1)
        for fold, test in zip(plan.folds, plan.test_sets):
            assert set(test) <= set(fold)
            for i in test:
                assert small_bundle.ratings[i].rating == small_bundle.p_max
            for i in set(fold) - set(test):
                assert small_bundle.ratings[i].rating < small_bundle.p_max

    def test_train_indices_complement(self, small_bundle):
        plan = kfold_split(small_bundle, 3, seed=2)
        for f in range(3):
            train = set(plan.train_indices(f))
            assert train.isdisjoint(plan.folds[f])
            assert len(train) + len(plan.folds[f]) == len(small_bundle.ratings)

    def test_seed_changes_assignment(self, small_bundle):
        a = kfold_split(small_bundle, 5, seed=0)
        b = kfold_split(small_bundle, 5, seed=1)
        assert a.folds != b.folds

    def test_deterministic(self, small_bundle):
        assert kfold_split(small_bundle, 5, 7).folds == kfold_split(small_bundle, 5, 7).folds

    def test_rejects_single_fold(self, small_bundle):
        with pytest.raises(SplitError):
            kfold_split(small_bundle, 1, 0)
