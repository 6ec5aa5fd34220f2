import threading

import numpy as np
import pytest

from opensat.core import Embedding, TileId
from opensat.errors import DimensionMismatch, DuplicateTile, EmptyStore
from opensat.store import TileRecord, TileStore
from opensat.tiler import TileGridSpec, TileRect

from helpers import rand_unit


def make_records(rng, n, dim=16, image_id="img"):
    return [
        TileRecord(
            TileId(image_id, i // 10, i % 10),
            rand_unit(rng, dim),
            rect=TileRect(i % 10 * 8, i // 10 * 8, 8, 8),
            label=None,
        )
        for i in range(n)
    ]


@pytest.fixture
def store(tmp_path):
    return TileStore.create(tmp_path / "store", dim=16)


class TestInsert:
    def test_insert_three(self, store, rng):
        assert store.insert_batch(make_records(rng, 3)) == 3
        assert store.count == 3

    def test_duplicate_batch_rejected_unchanged(self, store, rng):
        records = make_records(rng, 3)
        store.insert_batch(records)
        with pytest.raises(DuplicateTile):
            store.insert_batch(records)
        assert store.count == 3

    def test_duplicate_within_batch(self, store, rng):
        records = make_records(rng, 2) + make_records(rng, 1)
        with pytest.raises(DuplicateTile):
            store.insert_batch(records)
        assert store.count == 0

    def test_empty_batch_noop(self, store):
        assert store.insert_batch([]) == 0
        assert store.count == 0

    def test_dim_mismatch(self, store, rng):
        bad = TileRecord(TileId("img", 0, 0), rand_unit(rng, 8))
        with pytest.raises(DimensionMismatch):
            store.insert_batch([bad])

    def test_unnormalized_rejected(self, store):
        bad = TileRecord(TileId("img", 0, 0), Embedding.of([3.0] + [0.0] * 15))
        with pytest.raises(ValueError):
            store.insert_batch([bad])


class TestDurability:
    def test_read_after_write_survives_reopen(self, tmp_path, rng):
        store = TileStore.create(tmp_path / "s", dim=16)
        records = make_records(rng, 25)
        store.insert_batch(records)
        reopened = TileStore.open(tmp_path / "s")
        assert reopened.count == 25
        sample = reopened.record(records[7].id)
        assert sample is not None
        assert np.array_equal(sample.embedding.values, records[7].embedding.values)
        assert sample.rect == records[7].rect

    def test_scan_bit_identical_after_reopen(self, tmp_path, rng):
        store = TileStore.create(tmp_path / "s", dim=16)
        store.insert_batch(make_records(rng, 40))
        q = rand_unit(rng, 16)
        c = [rand_unit(rng, 16), rand_unit(rng, 16)]
        before = store.scan_similarities(q, c)
        after = TileStore.open(tmp_path / "s").scan_similarities(q, c)
        assert before == after

    def test_multiple_batches_accumulate(self, tmp_path, rng):
        store = TileStore.create(tmp_path / "s", dim=16)
        store.insert_batch(make_records(rng, 5, image_id="a"))
        store.insert_batch(make_records(rng, 5, image_id="b"))
        assert TileStore.open(tmp_path / "s").count == 10


class TestScan:
    def test_exact_match_sim_one(self, store, rng):
        # a tile byte-identical to the query scores exactly 1
        emb = rand_unit(rng, 16)
        store.insert_batch([TileRecord(TileId("img", 0, 0), emb)])
        rows = store.scan_similarities(emb, [])
        assert rows[0].sim_to_query == 1.0

    def test_empty_candidates(self, store, rng):
        store.insert_batch(make_records(rng, 4))
        rows = store.scan_similarities(rand_unit(rng, 16), [])
        assert len(rows) == 4
        assert all(r.candidate_sims == () for r in rows)

    def test_matches_double_loop_oracle(self, store, rng):
        records = make_records(rng, 5)
        store.insert_batch(records)
        q = rand_unit(rng, 16)
        cands = [rand_unit(rng, 16), rand_unit(rng, 16)]
        rows = store.scan_similarities(q, cands)
        by_id = {r.tile_id: r for r in rows}
        for rec in records:
            v64 = rec.embedding.values.astype(np.float64)
            expect_q = float(np.dot(v64, q.values.astype(np.float64)))
            got = by_id[rec.id]
            assert got.sim_to_query == max(-1.0, min(1.0, expect_q))
            for j, c in enumerate(cands):
                expect = float(np.dot(v64, c.values.astype(np.float64)))
                assert got.candidate_sims[j] == max(-1.0, min(1.0, expect))

    def test_bit_for_bit_oracle_1000_tiles(self, tmp_path, rng):
        store = TileStore.create(tmp_path / "big", dim=32)
        records = [
            TileRecord(TileId("img", i // 40, i % 40), rand_unit(rng, 32))
            for i in range(1000)
        ]
        store.insert_batch(records)
        q = rand_unit(rng, 32)
        rows = store.scan_similarities(q, [])
        oracle = {}
        for rec in records:
            s = float(
                np.dot(
                    rec.embedding.values.astype(np.float64),
                    q.values.astype(np.float64),
                )
            )
            oracle[rec.id] = max(-1.0, min(1.0, s))
        assert len(rows) == 1000
        for row in rows:
            assert row.sim_to_query == oracle[row.tile_id]

    def test_deterministic_tile_order(self, store, rng):
        records = [
            TileRecord(TileId("b", 0, 0), rand_unit(rng, 16)),
            TileRecord(TileId("a", 1, 0), rand_unit(rng, 16)),
            TileRecord(TileId("a", 0, 1), rand_unit(rng, 16)),
            TileRecord(TileId("a", 0, 0), rand_unit(rng, 16)),
        ]
        store.insert_batch(records)
        rows = store.scan_similarities(rand_unit(rng, 16), [])
        assert [r.tile_id for r in rows] == sorted(r.id for r in records)

    def test_empty_store_rejected(self, store, rng):
        with pytest.raises(EmptyStore):
            store.scan_similarities(rand_unit(rng, 16), [])

    def test_image_filter(self, store, rng):
        store.insert_batch(make_records(rng, 3, image_id="a"))
        store.insert_batch(make_records(rng, 4, image_id="b"))
        rows = store.scan_similarities(rand_unit(rng, 16), [], image_filter="b")
        assert len(rows) == 4
        assert all(r.tile_id.image_id == "b" for r in rows)

    def test_query_dim_checked(self, store, rng):
        store.insert_batch(make_records(rng, 2))
        with pytest.raises(DimensionMismatch):
            store.scan_similarities(rand_unit(rng, 8), [])


class TestTopK:
    def test_unique_max(self, store, rng):
        emb = rand_unit(rng, 16)
        store.insert_batch(
            [TileRecord(TileId("img", 0, 0), emb)] + make_records(rng, 5, image_id="x")
        )
        top = store.top_k(emb, 1)
        assert top[0][0] == TileId("img", 0, 0)
        assert top[0][1] == 1.0

    def test_k_larger_than_count(self, store, rng):
        store.insert_batch(make_records(rng, 3))
        top = store.top_k(rand_unit(rng, 16), 10)
        assert len(top) == 3
        sims = [s for _, s in top]
        assert sims == sorted(sims, reverse=True)

    def test_matches_full_sort_oracle(self, tmp_path, rng):
        store = TileStore.create(tmp_path / "s", dim=16)
        records = [
            TileRecord(TileId("img", i // 10, i % 10), rand_unit(rng, 16))
            for i in range(100)
        ]
        store.insert_batch(records)
        q = rand_unit(rng, 16)
        oracle = []
        for rec in records:
            s = float(
                np.dot(
                    rec.embedding.values.astype(np.float64),
                    q.values.astype(np.float64),
                )
            )
            oracle.append((rec.id, max(-1.0, min(1.0, s))))
        oracle.sort(key=lambda t: (-t[1], t[0]))
        assert store.top_k(q, 10) == oracle[:10]

    def test_ties_broken_by_tile_id(self, store, rng):
        emb = rand_unit(rng, 16)
        store.insert_batch(
            [
                TileRecord(TileId("z", 0, 0), emb),
                TileRecord(TileId("a", 0, 0), emb),
            ]
        )
        top = store.top_k(emb, 2)
        assert [t.image_id for t, _ in top] == ["a", "z"]


class TestManifest:
    def test_register_image(self, store, rng):
        store.insert_batch(make_records(rng, 4))
        store.register_image("img", TileGridSpec(80, 80, 8, 8))
        assert store.has_image("img")
        reopened = TileStore.open(store.path)
        assert reopened.images[0]["image_id"] == "img"
        assert reopened.images[0]["tile_size"] == 8

    def test_record_count_matches_segments(self, store, rng):
        store.insert_batch(make_records(rng, 4))
        import json

        manifest = json.loads((store.path / "manifest.json").read_text())
        assert manifest["record_count"] == 4
        assert len(manifest["segments"]) == 1


class TestConcurrency:
    def test_scan_sees_consistent_snapshot_during_insert(self, tmp_path, rng):
        store = TileStore.create(tmp_path / "s", dim=16)
        store.insert_batch(make_records(rng, 50, image_id="first"))
        q = rand_unit(rng, 16)
        sizes = set()
        stop = threading.Event()

        def reader():
            while not stop.is_set():
                sizes.add(len(store.scan_similarities(q, [])))

        threads = [threading.Thread(target=reader) for _ in range(4)]
        for t in threads:
            t.start()
        store.insert_batch(make_records(rng, 50, image_id="second"))
        stop.set()
        for t in threads:
            t.join()
        # every scan saw either the pre- or post-insert record set
        assert sizes <= {50, 100}

    def test_concurrent_single_writer(self, tmp_path, rng):
        store = TileStore.create(tmp_path / "s", dim=16)
        batches = [make_records(rng, 10, image_id=f"im{i}") for i in range(4)]
        errors = []

        def writer(batch):
            try:
                store.insert_batch(batch)
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=writer, args=(b,)) for b in batches]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        assert store.count == 40
        assert TileStore.open(tmp_path / "s").count == 40
