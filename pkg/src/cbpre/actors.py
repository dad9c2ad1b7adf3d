"""Owner, sensor, requester, proxy and CA actors under a discrete-event scheduler.

A scenario runs the whole marketplace flow on simulated time:

1. the owner registers each sensor on the ledger;
2. the CA certifies the sensor key, the owner provisions it and publishes
   the certificate, and the sensor uploads KEM/DEM-encrypted readings;
3. every requester opens a request contract (4) carrying its certificate;
5. the proxy sees the request and selects the matching records;
6. the owner posts one re-encryption key per record;
7. the proxy re-encrypts into a temporary share;
8. the proxy posts the share address;
9. the requester fetches, decrypts, checks the payloads and confirms.

With ``pre_enabled=False`` (the baseline without proxy re-encryption) the
owner posts an empty grant instead of keys, the proxy shares plain copies
of the stored ciphertexts, and the owner hands the per-record keys to the
requester off-chain. The key computation and its block-inclusion wait
leave the critical path; the contract still walks through every state.

Latency is the simulated time from a requester's submission of its request
to the end of its decryption. Timing knobs that the chain does not
determine (propagation, polling, compute) are explicit config fields.
"""

from __future__ import annotations

import heapq
import json
import math
import random
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from . import payload as dem
from .group import SECP256K1, Group
from .ledger import Event, Ledger, LedgerConfig, RequestState, Tx, TxKind, make_address
from .scheme import (
    AuthError,
    Ciphertext,
    KeyPair,
    MasterSecret,
    BLOCK_BYTES,
    Metadata,
    PublicParams,
    cert_request,
    ca_issue,
    decode_certificate,
    decrypt1,
    decrypt2,
    derive_public_key,
    encode_certificate,
    encrypt,
    finalize_key,
    reencrypt,
    rekey,
    setup,
)
from .storage import CloudStore

__all__ = [
    "ScenarioConfig",
    "ScenarioStalled",
    "DuplicateTimestamp",
    "TraceEvent",
    "LatencyRecord",
    "ScenarioTrace",
    "Scheduler",
    "CertificateAuthority",
    "SensorActor",
    "OwnerActor",
    "ProxyActor",
    "RequesterActor",
    "Scenario",
    "run_scenario",
    "held_private_keys",
]

EPOCH = 1_700_000_000
REQUESTER_ID_BASE = 0x8000_0000


class ScenarioStalled(RuntimeError):
    def __init__(self, message: str, trace: "ScenarioTrace"):
        super().__init__(message)
        self.trace = trace


class DuplicateTimestamp(ValueError):
    pass


@dataclass
class ScenarioConfig:
    n_sensors: int = 1
    n_requesters: int = 1
    readings_per_sensor: int = 3
    reading_interval_s: int = 60
    block_interval_s: float = 13.0
    block_capacity: int = 10
    price: int = 40
    seed: int = 0
    pre_enabled: bool = True
    # timing model, simulated seconds
    tx_propagation_s: float = 1.0
    poll_interval_s: float = 2.0
    rekey_compute_s: float = 1.0
    reencrypt_compute_s: float = 0.05
    decrypt_compute_s: float = 0.3
    offchain_delay_s: float = 0.2
    # economics
    deposit: int = 100
    initial_balance: int = 10_000
    tx_fee: int = 0
    share_ttl_s: float = 3600.0
    # fault injection: proxy flips one byte of the first re-encrypted block it shares
    fault_flip_share_byte: bool = False

    def __post_init__(self) -> None:
        for name in ("n_sensors", "n_requesters", "readings_per_sensor", "reading_interval_s"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.block_capacity < 0:
            raise ValueError("block_capacity must be >= 0")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: Path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TraceEvent:
    sim_time: float
    actor: str
    step: int
    detail: str
    request_id: Optional[int] = None


@dataclass
class LatencyRecord:
    request_id: int
    requester: str
    sensor_id: int
    n_records: int = 0
    t_request: float = math.nan
    t_request_mined: float = math.nan
    t_rekey_mined: float = math.nan
    t_reencrypted: float = math.nan
    t_data_ready: float = math.nan
    t_decrypted: float = math.nan
    h_request: int = 0  # ledger height when the request was submitted
    h_data_ready: int = 0
    verified: Optional[bool] = None

    @property
    def latency_s(self) -> float:
        return self.t_decrypted - self.t_request

    @property
    def block_hops(self) -> int:
        return self.h_data_ready - self.h_request

    def phases(self) -> Dict[str, float]:
        return {
            "t_request_mine": self.t_request_mined - self.t_request,
            "t_rekey_mine": self.t_rekey_mined - self.t_request_mined,
            "t_reencrypt": self.t_reencrypted - self.t_rekey_mined,
            "t_addr_mine": self.t_data_ready - self.t_reencrypted,
            "t_fetch_decrypt": self.t_decrypted - self.t_data_ready,
        }


@dataclass
class ScenarioTrace:
    config: ScenarioConfig
    events: List[TraceEvent] = field(default_factory=list)
    requests: Dict[int, LatencyRecord] = field(default_factory=dict)
    chain_digest: str = ""
    completed: bool = False

    @property
    def all_verified(self) -> bool:
        return bool(self.requests) and all(r.verified for r in self.requests.values())

    @property
    def mismatches(self) -> int:
        return sum(1 for r in self.requests.values() if r.verified is False)

    def latencies(self) -> List[float]:
        return [r.latency_s for _, r in sorted(self.requests.items())]

    def to_jsonl(self) -> str:
        lines = [json.dumps({"sim_time": e.sim_time, "actor": e.actor, "step": e.step,
                             "detail": e.detail, "request_id": e.request_id}, sort_keys=True)
                 for e in self.events]
        for rid, rec in sorted(self.requests.items()):
            lines.append(json.dumps({"latency": asdict(rec)}, sort_keys=True))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Scheduler
# ---------------------------------------------------------------------------


class Scheduler:
    """Minimal discrete-event loop: callbacks ordered by (time, insertion)."""

    def __init__(self, realtime: Optional[float] = None):
        self.now = 0.0
        self.realtime = realtime
        self._queue: List[Tuple[float, int, Callable[[], None]]] = []
        self._seq = 0

    def at(self, t: float, fn: Callable[[], None]) -> None:
        if t < self.now:
            raise ValueError(f"cannot schedule in the past ({t} < {self.now})")
        heapq.heappush(self._queue, (t, self._seq, fn))
        self._seq += 1

    def after(self, dt: float, fn: Callable[[], None]) -> None:
        self.at(self.now + dt, fn)

    def run(self, until: Callable[[], bool], deadline: Callable[[], float]) -> bool:
        """Run until ``until()`` holds. Returns False on hitting the deadline."""
        while self._queue:
            if until():
                return True
            t, _, fn = self._queue[0]
            if t > deadline():
                return False
            heapq.heappop(self._queue)
            if self.realtime:
                time.sleep(max(0.0, t - self.now) * self.realtime)
            self.now = t
            fn()
        return until()


# ---------------------------------------------------------------------------
# Actors
# ---------------------------------------------------------------------------


def held_private_keys(obj: Any, _seen: Optional[set] = None) -> set:
    """Ids of every :class:`KeyPair` reachable from an actor's attributes."""
    seen = _seen if _seen is not None else set()
    if id(obj) in seen:
        return set()
    seen.add(id(obj))
    if isinstance(obj, KeyPair):
        return {obj.id}
    if isinstance(obj, dict):
        children = list(obj.keys()) + list(obj.values())
    elif isinstance(obj, (list, tuple, set, frozenset)):
        children = list(obj)
    elif hasattr(obj, "__dict__") and not isinstance(obj, type):
        children = [v for k, v in vars(obj).items() if k != "world"]
    else:
        return set()
    out = set()
    for child in children:
        out |= held_private_keys(child, seen)
    return out


class Actor:
    def __init__(self, world: "Scenario", name: str, address: str):
        self.world = world
        self.name = name
        self.address = address
        self.cursor = 0
        self.busy_until = 0.0

    def trace(self, step: int, detail: str, request_id: Optional[int] = None) -> None:
        self.world.trace.events.append(TraceEvent(self.world.sched.now, self.name, step, detail, request_id))

    def submit(self, kind: TxKind, **payload: Any) -> str:
        ledger = self.world.ledger
        tx = Tx(self.address, ledger.next_nonce(self.address), kind, payload,
                self.world.sched.now + self.world.config.tx_propagation_s)
        return ledger.submit_tx(tx)

    def job(self, cost_s: float, fn: Callable[[], None]) -> None:
        """Run ``fn`` after ``cost_s`` of this actor's (serial) compute time."""
        start = max(self.world.sched.now, self.busy_until)
        self.busy_until = start + cost_s
        self.world.sched.at(self.busy_until, fn)

    def poll(self) -> None:
        events = self.world.ledger.events_since(self.cursor)
        self.cursor += len(events)
        for event in events:
            self.on_event(event)

    def on_event(self, event: Event) -> None:
        pass


class CertificateAuthority:
    """Holds the master secret. Sensors are authenticated by registry lookup,
    requesters by enrolment with the CA itself."""

    def __init__(self, params: PublicParams, msk: MasterSecret, ledger: Ledger):
        self.params = params
        self._msk = msk
        self._ledger = ledger
        self._requesters: Dict[int, str] = {}

    def enroll_requester(self, address: str) -> int:
        identity = REQUESTER_ID_BASE + len(self._requesters) + 1
        self._requesters[identity] = address
        return identity

    def issue(self, req, claimant: str, rng: random.Random):
        if req.identity >= REQUESTER_ID_BASE:
            if self._requesters.get(req.identity) != claimant:
                raise PermissionError(f"{claimant} is not enrolled as {req.identity:#010x}")
        else:
            if self._ledger.sensor(req.identity).owner != claimant:
                raise PermissionError(f"{claimant} does not own sensor {req.identity}")
        return ca_issue(self.params, self._msk, req, rng)


class SensorActor(Actor):
    def __init__(self, world: "Scenario", index: int, owner: "OwnerActor"):
        super().__init__(world, f"sensor{index}", owner.address)
        self.index = index
        self.mac = bytes([0x24, 0x71, 0x89, 0x00, index >> 8 & 0xFF, index & 0xFF])
        self.keypair: Optional[KeyPair] = None
        self.sensor_id: Optional[int] = None
        self._used_t0: set = set()

    def provision(self, keypair: KeyPair) -> None:
        self.keypair = keypair
        self.sensor_id = keypair.id

    def publish_reading(self, reading: bytes, t0: int) -> int:
        """KEM/DEM-encrypt one reading and upload it to the proxy."""
        if self.keypair is None:
            raise RuntimeError(f"{self.name} has no key material yet")
        if t0 in self._used_t0:
            raise DuplicateTimestamp(f"{self.name} already used timestamp {t0}")
        self._used_t0.add(t0)
        world = self.world
        content_key = dem.new_content_key(world.rng)
        ct = encrypt(world.params, content_key, self.keypair, t0)
        record_id = world.store.put_record(self.sensor_id, ct.to_bytes(world.params.group),
                                           dem.seal(content_key, reading))
        world.originals[(self.sensor_id, t0)] = reading
        self.trace(2, f"uploaded record {record_id} T0={t0}")
        return record_id


class OwnerActor(Actor):
    def __init__(self, world: "Scenario"):
        super().__init__(world, "owner", make_address("owner"))
        self.sensors: Dict[bytes, SensorActor] = {}
        self.keys: Dict[int, KeyPair] = {}

    def register_sensor(self, sensor: SensorActor, price: int, description: str) -> None:
        self.sensors[sensor.mac] = sensor
        self.submit(TxKind.REGISTER_SENSOR, mac=sensor.mac, price=price, description=description, cert=None)
        self.trace(1, f"register {sensor.name} mac={sensor.mac.hex(':')}")

    def on_event(self, event: Event) -> None:
        f = event.fields
        if event.kind == "SensorRegistered" and f["owner"] == self.address:
            self._provision(f["sensor_id"], self.sensors[bytes(f["mac"])])
        elif event.kind == "RequestCreated" and f["owner"] == self.address:
            self._on_request(f["contract_id"])

    def _provision(self, sensor_id: int, sensor: SensorActor) -> None:
        world = self.world
        self.trace(1, f"{sensor.name} registered as id {sensor_id:#010x}")
        r_u, req = cert_request(world.params, sensor_id, world.rng)
        resp = world.ca.issue(req, self.address, world.rng)
        kp = finalize_key(world.params, r_u, resp, sensor_id)
        self.keys[sensor_id] = kp
        sensor.provision(kp)
        self.submit(TxKind.SET_CERT, sensor_id=sensor_id, cert=encode_certificate(world.params.group, kp.cert))
        self.trace(2, f"provisioned {sensor.name} with certified key")
        world.on_sensor_ready(sensor)

    def _on_request(self, contract_id: int) -> None:
        world = self.world
        contract = world.ledger.contract(contract_id)
        records = world.store.query_records(contract.sensor_id, contract.time_range)
        pre = world.config.pre_enabled
        delay = world.config.offchain_delay_s
        if not pre:
            # baseline: an empty on-chain grant, key material travels off-chain
            self.submit(TxKind.POST_REKEY, contract_id=contract_id, rekeys=())
            self.trace(6, "granted access; keys follow off-chain", contract_id)
            world.sched.after(delay, lambda: world.proxy.on_grant(contract_id))

        def done() -> None:
            rks = self._rekeys(contract, records)
            if pre:
                self.submit(TxKind.POST_REKEY, contract_id=contract_id, rekeys=tuple(rks))
                self.trace(6, f"posted {len(rks)} re-encryption keys", contract_id)
            else:
                requester = world.requester_by_address(contract.requester)
                world.sched.after(delay, lambda: requester.on_offchain_rekeys(contract_id, rks))

        self.job(world.config.rekey_compute_s * len(records), done)

    def _rekeys(self, contract, records) -> List[bytes]:
        world = self.world
        group = world.params.group
        kp = self.keys[contract.sensor_id]
        cert_b = decode_certificate(group, contract.requester_cert)
        return [rekey(world.params, kp, contract.requester_id, cert_b,
                      Ciphertext.from_bytes(group, r.ciphertext).meta) for r in records]

    def read_own(self, record) -> bytes:
        """Owner-side decryption of a stored record (decrypt1 + DEM)."""
        group = self.world.params.group
        ct = Ciphertext.from_bytes(group, record.ciphertext)
        key = decrypt1(self.world.params, ct, self.keys[record.sensor_id])
        return dem.open_sealed(key, record.payload_ct)


class ProxyActor(Actor):
    def __init__(self, world: "Scenario"):
        super().__init__(world, "proxy", make_address("proxy"))
        self.store = world.store
        self._tampered = False

    def on_event(self, event: Event) -> None:
        f = event.fields
        world = self.world
        if event.kind == "RequestCreated":
            n = len(self.store.query_records(f["sensor_id"], (f["t_from"], f["t_to"])))
            self.trace(5, f"notified; {n} records match", f["contract_id"])
        elif event.kind == "ReKeyPosted" and world.config.pre_enabled:
            contract = world.ledger.contract(f["contract_id"])
            self._reencrypt(contract.contract_id, list(contract.rekeys))

    def on_grant(self, contract_id: int) -> None:
        """Baseline: share plain copies of the stored ciphertexts."""
        self.world.trace.requests[contract_id].t_rekey_mined = self.world.sched.now
        self._reencrypt(contract_id, None)

    def _reencrypt(self, contract_id: int, rks: Optional[List[bytes]]) -> None:
        world = self.world
        contract = world.ledger.contract(contract_id)
        records = self.store.query_records(contract.sensor_id, contract.time_range)
        if rks is None:
            rks = [bytes(BLOCK_BYTES)] * len(records)

        def done() -> None:
            share = self.store.apply_rekey(records, rks, contract.requester_id)
            if world.config.fault_flip_share_byte and not self._tampered:
                self._tampered = True
                self._flip_first_byte(share)
            world.trace.requests[contract_id].t_reencrypted = world.sched.now
            verb = "re-encrypted" if world.config.pre_enabled else "copied"
            self.trace(7, f"{verb} {len(records)} records into share {share.share_id}", contract_id)
            self.submit(TxKind.POST_DATA_ADDR, contract_id=contract_id, share_id=share.share_id)

        self.job(world.config.reencrypt_compute_s * len(records), done)

    def _flip_first_byte(self, share) -> None:
        first = share.items[0]
        bad = type(first)(bytes([first.c_b[0] ^ 0x01]) + first.c_b[1:], first.c_a, first.meta,
                          first.id_b, first.h_a, first.s_a)
        object.__setattr__(share, "items", (bad,) + share.items[1:])


class RequesterActor(Actor):
    def __init__(self, world: "Scenario", index: int):
        super().__init__(world, f"requester{index}", make_address(f"requester{index}"))
        self.keypair: Optional[KeyPair] = None
        self.contracts: Dict[int, int] = {}  # contract id -> sensor id
        self.received: Dict[Tuple[int, int], bytes] = {}
        self._ready: Dict[int, str] = {}
        self._offchain_keys: Dict[int, List[bytes]] = {}

    def ensure_keys(self) -> KeyPair:
        if self.keypair is None:
            world = self.world
            identity = world.ca.enroll_requester(self.address)
            r_u, req = cert_request(world.params, identity, world.rng)
            resp = world.ca.issue(req, self.address, world.rng)
            self.keypair = finalize_key(world.params, r_u, resp, identity)
        return self.keypair

    def request(self, sensor_id: int, time_range: Tuple[int, int], deposit: int) -> str:
        """Open a request contract, depositing up to ``deposit`` of what we hold."""
        kp = self.ensure_keys()
        world = self.world
        deposit = max(0, min(deposit, world.ledger.balance(self.address) - world.config.tx_fee))
        tx_id = self.submit(TxKind.REQUEST_DATA, requester_id=kp.id,
                            requester_cert=encode_certificate(world.params.group, kp.cert),
                            sensor_id=sensor_id, t_from=time_range[0], t_to=time_range[1], deposit=deposit)
        self.trace(3, f"requested sensor {sensor_id:#010x} range {time_range}")
        world.pending_requests[tx_id] = (world.sched.now, world.ledger.height)
        return tx_id

    def on_event(self, event: Event) -> None:
        f = event.fields
        if event.kind == "DataReady" and f["requester"] == self.address:
            self._ready[f["contract_id"]] = f["share_id"]
            self._maybe_fetch(f["contract_id"])

    def on_offchain_rekeys(self, contract_id: int, rks: List[bytes]) -> None:
        self._offchain_keys[contract_id] = rks
        self._maybe_fetch(contract_id)

    def _maybe_fetch(self, contract_id: int) -> None:
        if contract_id not in self._ready:
            return
        if not self.world.config.pre_enabled and contract_id not in self._offchain_keys:
            return
        self._fetch(contract_id, self._ready.pop(contract_id))

    def _fetch(self, contract_id: int, share_id: str) -> None:
        world = self.world
        share = world.store.fetch_share(share_id)
        items = list(share.items)
        if not world.config.pre_enabled:
            # apply the off-chain keys to the copied ciphertexts ourselves
            rks = self._offchain_keys.pop(contract_id)
            items = [reencrypt(world.params, Ciphertext(it.c_b, it.meta, it.h_a, it.s_a), rk, it.id_b)
                     for it, rk in zip(items, rks)]

        def done() -> None:
            ok = True
            sensor_id = world.ledger.contract(contract_id).sensor_id
            cert_a = decode_certificate(world.params.group, world.ledger.sensor(sensor_id).cert)
            p_a = derive_public_key(world.params, cert_a, sensor_id)
            for item, sealed in zip(items, share.payloads):
                try:
                    key = decrypt2(world.params, item, self.keypair, p_a)
                    reading = dem.open_sealed(key, sealed)
                except (AuthError, dem.PayloadAuthError):
                    ok = False
                    continue
                self.received[(item.meta.sensor_id, item.meta.timestamp)] = reading
                if world.originals.get((item.meta.sensor_id, item.meta.timestamp)) != reading:
                    ok = False
            rec = world.trace.requests[contract_id]
            rec.t_decrypted = world.sched.now
            rec.verified = ok and len(items) == rec.n_records
            self.trace(9, f"decrypted {len(items)} items, verified={rec.verified}", contract_id)
            if rec.verified:
                self.submit(TxKind.CONFIRM, contract_id=contract_id)
            else:
                self.submit(TxKind.CANCEL, contract_id=contract_id)

        self.job(world.config.decrypt_compute_s * len(items), done)


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------


class Scenario:
    """Wires all actors to one ledger and one store and runs the flow."""

    def __init__(self, config: ScenarioConfig, *, group: Group = SECP256K1,
                 store_dir: Optional[Path] = None, realtime: Optional[float] = None):
        self.config = config
        self.rng = random.Random(config.seed)
        self.sched = Scheduler(realtime)
        self.trace = ScenarioTrace(config)
        self.params, msk = setup(group, self.rng)
        self.proxy_address = make_address("proxy")
        self.ledger = Ledger(LedgerConfig(block_interval_s=config.block_interval_s,
                                          block_capacity=config.block_capacity,
                                          seed=self.rng.getrandbits(64), tx_fee=config.tx_fee),
                             storage_operator=self.proxy_address)
        self.store = CloudStore(self.params, store_dir, clock=lambda: self.sched.now,
                                rng=random.Random(self.rng.getrandbits(64)), share_ttl_s=config.share_ttl_s)
        self.ca = CertificateAuthority(self.params, msk, self.ledger)
        self.owner = OwnerActor(self)
        self.proxy = ProxyActor(self)
        self.sensors = [SensorActor(self, i, self.owner) for i in range(config.n_sensors)]
        self.requesters = [RequesterActor(self, i) for i in range(config.n_requesters)]
        self.originals: Dict[Tuple[int, int], bytes] = {}
        self.pending_requests: Dict[str, Tuple[float, int]] = {}
        self._sensors_done = 0
        self._request_start: Optional[float] = None
        self._poll_scheduled = False

        for actor in self.actors:
            self.ledger.create_account(actor.address, config.initial_balance)

    def requester_by_address(self, address: str) -> "RequesterActor":
        return next(r for r in self.requesters if r.address == address)

    @property
    def actors(self) -> List[Actor]:
        return [self.owner, self.proxy, *self.requesters]

    # -- block / poll loop ----------------------------------------------

    def _schedule_block(self) -> None:
        self.sched.at(self.ledger.next_block_time, self._mine)

    def _mine(self) -> None:
        block = self.ledger.mine_next_block()
        self._record_block(block)
        self._schedule_block()
        poll = self.config.poll_interval_s
        t = math.ceil(self.sched.now / poll) * poll if poll > 0 else self.sched.now
        if not self._poll_scheduled:
            self._poll_scheduled = True
            self.sched.at(t, self._poll_all)

    def _poll_all(self) -> None:
        self._poll_scheduled = False
        for actor in self.actors:
            actor.poll()

    def _record_block(self, block) -> None:
        for tx in block.txs:
            receipt = self.ledger.receipt(tx.tx_id)
            if tx.kind is TxKind.REQUEST_DATA and tx.tx_id in self.pending_requests:
                t_req, h_req = self.pending_requests.pop(tx.tx_id)
                if not receipt.ok:
                    raise receipt.exc
                cid = receipt.result
                sender = self.requester_by_address(tx.sender)
                sender.contracts[cid] = tx.payload["sensor_id"]
                n = len(self.store.query_records(tx.payload["sensor_id"],
                                                 (tx.payload["t_from"], tx.payload["t_to"])))
                self.trace.requests[cid] = LatencyRecord(cid, sender.name, tx.payload["sensor_id"], n,
                                                         t_request=t_req, t_request_mined=block.timestamp,
                                                         h_request=h_req)
                self.trace.events.append(TraceEvent(block.timestamp, "ledger", 4,
                                                    f"request contract {cid} mined", cid))
            elif tx.kind is TxKind.POST_REKEY and receipt.ok:
                cid = tx.payload["contract_id"]
                if self.config.pre_enabled:
                    self.trace.requests[cid].t_rekey_mined = block.timestamp
                self.trace.events.append(TraceEvent(block.timestamp, "ledger", 6,
                                                    f"re-encryption keys mined for {cid}", cid))
            elif tx.kind is TxKind.POST_DATA_ADDR and receipt.ok:
                cid = tx.payload["contract_id"]
                rec = self.trace.requests[cid]
                rec.t_data_ready = block.timestamp
                rec.h_data_ready = block.height
                self.trace.events.append(TraceEvent(block.timestamp, "ledger", 8,
                                                    f"share address mined for {cid}", cid))
            elif tx.kind in (TxKind.CONFIRM, TxKind.CANCEL) and receipt.ok:
                cid = tx.payload["contract_id"]
                self.trace.events.append(TraceEvent(block.timestamp, "ledger", 9,
                                                    f"contract {cid} {tx.kind.value.lower()}ed", cid))
            elif not receipt.ok:
                self.trace.events.append(TraceEvent(block.timestamp, "ledger", 0,
                                                    f"{tx.kind.value} failed: {receipt.error}"))

    # -- flow ------------------------------------------------------------

    def on_sensor_ready(self, sensor: SensorActor) -> None:
        cfg = self.config
        start = math.ceil(self.sched.now) + 1
        for j in range(cfg.readings_per_sensor):
            t = start + j * cfg.reading_interval_s
            value = 15.0 + 10.0 * self.rng.random()
            reading = json.dumps({"mac": sensor.mac.hex(":"), "temp_c": round(value, 2), "seq": j}).encode()
            self.sched.at(t, lambda s=sensor, r=reading, t=t: s.publish_reading(r, EPOCH + t))
        last = start + (cfg.readings_per_sensor - 1) * cfg.reading_interval_s
        self._sensors_done += 1
        self._request_start = max(self._request_start or 0.0, float(last + 1))
        if self._sensors_done == cfg.n_sensors:
            self.sched.at(self._request_start, self._issue_requests)

    def _issue_requests(self) -> None:
        # requests need every sensor certificate on-chain; wait for the next block otherwise
        if any(self.ledger.sensor(s.sensor_id).cert is None for s in self.sensors):
            self.sched.at(self.ledger.next_block_time, self._issue_requests)
            return
        self._request_start = self.sched.now
        for i, requester in enumerate(self.requesters):
            sensor = self.sensors[i % len(self.sensors)]
            t0s = sorted(t for (sid, t) in self.originals if sid == sensor.sensor_id)
            requester.request(sensor.sensor_id, (t0s[0], t0s[-1]), self.config.deposit)

    def _done(self) -> bool:
        if self._request_start is None or len(self.trace.requests) < self.config.n_requesters:
            return False
        terminal = (RequestState.COMPLETED, RequestState.CANCELLED)
        return all(self.ledger.contract(cid).state in terminal for cid in self.trace.requests)

    def _deadline(self) -> float:
        limit = 100 * self.config.block_interval_s
        if self._request_start is None or self._sensors_done < self.config.n_sensors:
            return limit
        return self._request_start + limit

    def run(self) -> ScenarioTrace:
        for i, sensor in enumerate(self.sensors):
            self.owner.register_sensor(sensor, self.config.price, f"temperature sensor {i}")
        self._schedule_block()
        finished = self.sched.run(self._done, self._deadline)
        self.trace.chain_digest = self.ledger.chain_digest()
        self.trace.completed = finished
        if not finished:
            raise ScenarioStalled(f"scenario did not complete by t={self._deadline():.1f}s", self.trace)
        return self.trace


def run_scenario(config: ScenarioConfig, **kwargs: Any) -> ScenarioTrace:
    return Scenario(config, **kwargs).run()
