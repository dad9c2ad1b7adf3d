import inspect
import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from cbpre.group import SECP256K1
from cbpre.scheme import (
    Ciphertext,
    certified_user_keygen,
    decrypt2,
    encrypt,
    rekey,
    setup,
    xor_block,
)
from cbpre.storage import (
    CloudStore,
    EmptySelection,
    Expired,
    IdMismatch,
    MalformedCiphertext,
    UnknownShare,
)

T0 = 1_700_000_000


class Clock:
    def __init__(self):
        self.t = 0.0

    def __call__(self):
        return self.t


@pytest.fixture(scope="module")
def world():
    rng = random.Random(77)
    params, msk = setup(SECP256K1, rng)
    s1 = certified_user_keygen(params, msk, 1, rng)
    s2 = certified_user_keygen(params, msk, 2, rng)
    bob = certified_user_keygen(params, msk, 0x80000001, rng)
    return params, s1, s2, bob


def make_store(params, root=None, **kw):
    clock = Clock()
    return CloudStore(params, root, clock=clock, rng=random.Random(1), **kw), clock


def ct_bytes(params, kp, t0, m=None):
    return encrypt(params, m or bytes([t0 & 0xFF]) * 32, kp, t0).to_bytes(SECP256K1)


class TestRecords:
    def test_monotone_ids(self, world):
        params, s1, s2, _ = world
        store, _ = make_store(params)
        ids = [store.put_record(1, ct_bytes(params, s1, T0 + i)) for i in range(3)]
        ids.append(store.put_record(2, ct_bytes(params, s2, T0)))
        assert ids == [1, 2, 3, 4]

    def test_id_mismatch(self, world):
        params, s1, _, _ = world
        store, _ = make_store(params)
        with pytest.raises(IdMismatch):
            store.put_record(2, ct_bytes(params, s1, T0))

    def test_malformed(self, world):
        params, s1, _, _ = world
        store, _ = make_store(params)
        good = ct_bytes(params, s1, T0)
        with pytest.raises(MalformedCiphertext):
            store.put_record(1, good[:-1])
        with pytest.raises(MalformedCiphertext):
            store.put_record(1, b"\x09" + good[1:])

    def test_durable_across_restart(self, world, tmp_path):
        params, s1, _, _ = world
        store, clock = make_store(params, tmp_path)
        clock.t = 12.5
        ct = ct_bytes(params, s1, T0)
        store.put_record(1, ct, b"payload")
        reopened, _ = make_store(params, tmp_path)
        [rec] = reopened.query_records(1, (T0, T0))
        assert (rec.record_id, rec.ciphertext, rec.payload_ct, rec.stored_at) == (1, ct, b"payload", 12.5)
        assert reopened.put_record(1, ct_bytes(params, s1, T0 + 1)) == 2

    def test_record_file_format(self, world, tmp_path):
        params, s1, _, _ = world
        store, _ = make_store(params, tmp_path)
        store.put_record(1, ct_bytes(params, s1, T0), b"\x01\x02")
        [line] = (tmp_path / "records" / "00000001.jsonl").read_text().splitlines()
        row = json.loads(line)
        assert set(row) == {"record_id", "sensor_id", "ct", "payload_ct", "stored_at"}
        assert row["sensor_id"] == "00000001" and row["payload_ct"] == "0102"

    def test_range_filter(self, world):
        params, s1, s2, _ = world
        store, _ = make_store(params)
        for i in range(5):
            store.put_record(1, ct_bytes(params, s1, T0 + 10 * i))
        store.put_record(2, ct_bytes(params, s2, T0 + 10))
        assert store.query_records(1, (T0 + 1, T0 + 9)) == []
        [only] = store.query_records(1, (T0 + 20, T0 + 20))
        assert only.timestamp == T0 + 20
        assert [r.record_id for r in store.query_records(1, (T0 + 10, T0 + 30))] == [2, 3, 4]
        with pytest.raises(ValueError):
            store.query_records(1, (5, 4))

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from([1, 2]), st.integers(0, 40)), max_size=25, unique=True),
           st.integers(0, 40), st.integers(0, 40), st.sampled_from([1, 2, 3]))
    def test_filter_equals_linear_scan(self, world, entries, a, b, sensor):
        params, s1, s2, _ = world
        keys = {1: s1, 2: s2}
        store, _ = make_store(params)
        for sid, dt in entries:
            store.put_record(sid, ct_bytes(params, keys[sid], T0 + dt))
        lo, hi = min(a, b) + T0, max(a, b) + T0
        scan = [r for r in store.all_records()
                if Ciphertext.from_bytes(SECP256K1, r.ciphertext).meta.sensor_id == sensor
                and lo <= Ciphertext.from_bytes(SECP256K1, r.ciphertext).meta.timestamp <= hi]
        assert store.query_records(sensor, (lo, hi)) == scan


class TestShares:
    def test_single_record_share(self, world):
        params, s1, _, bob = world
        store, _ = make_store(params)
        m = b"\x5a" * 32
        store.put_record(1, ct_bytes(params, s1, T0, m))
        recs = store.query_records(1, (T0, T0))
        c = Ciphertext.from_bytes(SECP256K1, recs[0].ciphertext)
        rk = rekey(params, s1, bob.id, bob.cert, c.meta)
        share = store.apply_rekey(recs, [rk], bob.id)
        assert len(share.share_id) == 32 and len(share.items) == 1
        assert share.items[0].c_b == xor_block(rk, c.c_a)
        assert decrypt2(params, store.fetch_share(share.share_id).items[0], bob, s1.public) == m

    def test_every_item_decrypts(self, world):
        params, s1, _, bob = world
        store, _ = make_store(params)
        msgs = [random.Random(i).randbytes(32) for i in range(6)]
        for i, m in enumerate(msgs):
            store.put_record(1, ct_bytes(params, s1, T0 + i, m))
        recs = store.query_records(1, (T0, T0 + 5))
        rks = [rekey(params, s1, bob.id, bob.cert, Ciphertext.from_bytes(SECP256K1, r.ciphertext).meta)
               for r in recs]
        share = store.apply_rekey(recs, rks, bob.id)
        assert [decrypt2(params, it, bob, s1.public) for it in share.items] == msgs

    def test_bad_selections(self, world):
        params, s1, s2, bob = world
        store, _ = make_store(params)
        with pytest.raises(EmptySelection):
            store.apply_rekey([], [], bob.id)
        store.put_record(1, ct_bytes(params, s1, T0))
        store.put_record(2, ct_bytes(params, s2, T0))
        recs = store.all_records()
        with pytest.raises(ValueError):
            store.apply_rekey(recs[:1], [], bob.id)
        with pytest.raises(ValueError):
            store.apply_rekey(recs, [bytes(32)] * 2, bob.id)

    def test_fetch_and_expiry(self, world):
        params, s1, _, bob = world
        store, clock = make_store(params, share_ttl_s=100.0)
        store.put_record(1, ct_bytes(params, s1, T0))
        share = store.apply_rekey(store.all_records(), [bytes(32)], bob.id)
        clock.t = 99.9
        assert store.fetch_share(share.share_id) is share
        clock.t = 100.0
        with pytest.raises(Expired):
            store.fetch_share(share.share_id)
        with pytest.raises(UnknownShare):
            store.fetch_share(random.Random(3).randbytes(16).hex())

    def test_gc(self, world, tmp_path):
        params, s1, _, bob = world
        store, clock = make_store(params, tmp_path)
        assert store.gc_expired() == 0
        store.put_record(1, ct_bytes(params, s1, T0))
        recs = store.all_records()
        old = store.apply_rekey(recs, [bytes(32)], bob.id, ttl_s=10.0)
        clock.t = 5.0
        fresh = store.apply_rekey(recs, [bytes(32)], bob.id, ttl_s=10.0)
        assert store.gc_expired(now=10.0) == 1
        assert store.gc_expired(now=10.0) == 0
        assert store.fetch_share(fresh.share_id) == fresh
        assert not (tmp_path / "shares" / f"{old.share_id}.json").exists()

    def test_share_manifest_survives_restart(self, world, tmp_path):
        params, s1, _, bob = world
        store, _ = make_store(params, tmp_path)
        store.put_record(1, ct_bytes(params, s1, T0), b"pp")
        share = store.apply_rekey(store.all_records(), [b"\x01" * 32], bob.id)
        manifest = json.loads((tmp_path / "shares" / f"{share.share_id}.json").read_text())
        assert {"share_id", "items", "created_at", "ttl_s"} <= set(manifest)
        reopened, _ = make_store(params, tmp_path)
        assert reopened.fetch_share(share.share_id) == share


def test_proxy_interface_takes_no_private_keys():
    # every CloudStore entry point accepts public material only
    for name, fn in inspect.getmembers(CloudStore, inspect.isfunction):
        params = set(inspect.signature(fn).parameters)
        assert not params & {"kp", "keypair", "d", "msk", "private_key"}, name
    import cbpre.storage as mod
    assert "decrypt1" not in vars(mod) and "decrypt2" not in vars(mod)
