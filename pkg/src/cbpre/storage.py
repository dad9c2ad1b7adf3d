"""Cloud storage node acting as the semi-trusted re-encryption proxy.

Records are appended to one JSON-lines file per sensor and indexed in
memory; the store reloads its index from disk on construction. The proxy
only ever sees ciphertexts, public parameters and re-encryption keys.

Record line::

    {"record_id": n, "sensor_id": "hex8", "ct": "hex", "payload_ct": "hex", "stored_at": t}

Share manifest (``shares/<share_id>.json``)::

    {"share_id": "hex32", "items": ["hex", ...], "payloads": ["hex", ...],
     "created_at": t, "ttl_s": n}
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .group import DecodeError
from .scheme import Ciphertext, PublicParams, ReEncCiphertext, reencrypt

__all__ = [
    "StorageError",
    "MalformedCiphertext",
    "IdMismatch",
    "EmptySelection",
    "UnknownShare",
    "Expired",
    "DataRecord",
    "TempShare",
    "CloudStore",
    "DEFAULT_SHARE_TTL_S",
]

DEFAULT_SHARE_TTL_S = 3600.0


class StorageError(Exception):
    pass


class MalformedCiphertext(StorageError):
    pass


class IdMismatch(StorageError):
    pass


class EmptySelection(StorageError):
    pass


class UnknownShare(StorageError):
    pass


class Expired(StorageError):
    pass


@dataclass(frozen=True)
class DataRecord:
    record_id: int
    sensor_id: int
    ciphertext: bytes
    payload_ct: Optional[bytes]
    stored_at: float
    timestamp: int  # meta T0, cached for filtering

    def to_json(self) -> dict:
        return {
            "record_id": self.record_id,
            "sensor_id": f"{self.sensor_id:08x}",
            "ct": self.ciphertext.hex(),
            "payload_ct": None if self.payload_ct is None else self.payload_ct.hex(),
            "stored_at": self.stored_at,
        }


@dataclass(frozen=True)
class TempShare:
    share_id: str
    items: Tuple[ReEncCiphertext, ...]
    payloads: Tuple[Optional[bytes], ...]
    created_at: float
    ttl_s: float

    def expired(self, now: float) -> bool:
        return now >= self.created_at + self.ttl_s


class CloudStore:
    """Record store plus temporary shares.

    ``root=None`` keeps everything in memory. ``clock`` supplies the current
    (simulated) time for ``stored_at``, share creation and expiry.
    """

    def __init__(self, params: PublicParams, root: Optional[Path] = None, *,
                 clock: Callable[[], float] = lambda: 0.0, rng: Optional[random.Random] = None,
                 share_ttl_s: float = DEFAULT_SHARE_TTL_S):
        self.params = params
        self.root = Path(root) if root is not None else None
        self.clock = clock
        self.share_ttl_s = share_ttl_s
        self._rng = rng or random.Random()
        self._records: Dict[int, List[DataRecord]] = {}
        self._shares: Dict[str, TempShare] = {}
        self._next_id = 1
        if self.root is not None:
            (self.root / "records").mkdir(parents=True, exist_ok=True)
            (self.root / "shares").mkdir(parents=True, exist_ok=True)
            self._load()

    # -- persistence -----------------------------------------------------

    def _record_file(self, sensor_id: int) -> Path:
        return self.root / "records" / f"{sensor_id:08x}.jsonl"

    def _load(self) -> None:
        group = self.params.group
        for path in sorted((self.root / "records").glob("*.jsonl")):
            with open(path) as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    row = json.loads(line)
                    ct = bytes.fromhex(row["ct"])
                    meta = Ciphertext.from_bytes(group, ct).meta
                    rec = DataRecord(row["record_id"], int(row["sensor_id"], 16), ct,
                                     None if row["payload_ct"] is None else bytes.fromhex(row["payload_ct"]),
                                     row["stored_at"], meta.timestamp)
                    self._records.setdefault(rec.sensor_id, []).append(rec)
                    self._next_id = max(self._next_id, rec.record_id + 1)
        for recs in self._records.values():
            recs.sort(key=lambda r: r.record_id)
        for path in sorted((self.root / "shares").glob("*.json")):
            row = json.loads(path.read_text())
            items = tuple(ReEncCiphertext.from_bytes(group, bytes.fromhex(h)) for h in row["items"])
            payloads = tuple(None if p is None else bytes.fromhex(p) for p in row["payloads"])
            self._shares[row["share_id"]] = TempShare(row["share_id"], items, payloads,
                                                      row["created_at"], row["ttl_s"])

    # -- records ---------------------------------------------------------

    def put_record(self, sensor_id: int, ciphertext: bytes, payload_ct: Optional[bytes] = None) -> int:
        try:
            ct = Ciphertext.from_bytes(self.params.group, bytes(ciphertext))
        except DecodeError as exc:
            raise MalformedCiphertext(str(exc)) from None
        if ct.meta.sensor_id != sensor_id:
            raise IdMismatch(f"metadata id {ct.meta.sensor_id:#010x} != sensor {sensor_id:#010x}")
        rec = DataRecord(self._next_id, sensor_id, bytes(ciphertext),
                         None if payload_ct is None else bytes(payload_ct), self.clock(), ct.meta.timestamp)
        if self.root is not None:
            with open(self._record_file(sensor_id), "a") as fh:
                fh.write(json.dumps(rec.to_json()) + "\n")
        self._records.setdefault(sensor_id, []).append(rec)
        self._next_id += 1
        return rec.record_id

    def query_records(self, sensor_id: int, time_range: Tuple[int, int]) -> List[DataRecord]:
        """Records of one sensor whose timestamp lies in the inclusive range."""
        t_from, t_to = time_range
        if t_from > t_to:
            raise ValueError("time range must satisfy t_from <= t_to")
        return [r for r in self._records.get(sensor_id, ()) if t_from <= r.timestamp <= t_to]

    def all_records(self) -> List[DataRecord]:
        out = [r for recs in self._records.values() for r in recs]
        return sorted(out, key=lambda r: r.record_id)

    # -- shares ----------------------------------------------------------

    def apply_rekey(self, records: Sequence[DataRecord], rekeys: Sequence[bytes], id_b: int,
                    *, ttl_s: Optional[float] = None) -> TempShare:
        """Re-encrypt each record with its own key and publish a temporary share.

        ``rekeys[i]`` must be the key computed for ``records[i]``'s metadata.
        """
        if not records:
            raise EmptySelection("no records to share")
        if len(rekeys) != len(records):
            raise ValueError(f"{len(records)} records but {len(rekeys)} re-encryption keys")
        if len({r.sensor_id for r in records}) != 1:
            raise ValueError("a share covers one sensor")
        group = self.params.group
        items = tuple(
            reencrypt(self.params, Ciphertext.from_bytes(group, r.ciphertext), rk, id_b)
            for r, rk in zip(records, rekeys)
        )
        share = TempShare(self._rng.randbytes(16).hex(), items, tuple(r.payload_ct for r in records),
                          self.clock(), self.share_ttl_s if ttl_s is None else ttl_s)
        self._store_share(share)
        return share

    def _store_share(self, share: TempShare) -> None:
        if share.share_id in self._shares:
            raise StorageError(f"share id collision {share.share_id}")
        self._shares[share.share_id] = share
        if self.root is not None:
            group = self.params.group
            manifest = {
                "share_id": share.share_id,
                "items": [it.to_bytes(group).hex() for it in share.items],
                "payloads": [None if p is None else p.hex() for p in share.payloads],
                "created_at": share.created_at,
                "ttl_s": share.ttl_s,
            }
            (self.root / "shares" / f"{share.share_id}.json").write_text(json.dumps(manifest))

    def fetch_share(self, share_id: str) -> TempShare:
        try:
            share = self._shares[share_id]
        except KeyError:
            raise UnknownShare(share_id) from None
        if share.expired(self.clock()):
            raise Expired(share_id)
        return share

    def gc_expired(self, now: Optional[float] = None) -> int:
        now = self.clock() if now is None else now
        dead = [sid for sid, s in self._shares.items() if s.expired(now)]
        for sid in dead:
            del self._shares[sid]
            if self.root is not None:
                (self.root / "shares" / f"{sid}.json").unlink(missing_ok=True)
        return len(dead)
