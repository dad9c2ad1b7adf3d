"""Deterministic simulated blockchain with the marketplace contracts.

The ledger is a single-writer state machine. Actors submit :class:`Tx`
objects into a pending pool; :meth:`Ledger.mine_next_block` advances the
block clock by an exponential inter-arrival time and applies up to
``block_capacity`` pending transactions in ``(submitted_at, sender, nonce)``
order. Contract failures do not abort a block: the transaction is included,
marked failed in its receipt, and a ``TxFailed`` event is emitted.

Two contracts live in :class:`ContractState`:

* the sensor registry, which assigns sequential 32-bit sensor ids, and
* one request contract per data request, holding the escrow, the requester's
  certificate, the posted re-encryption keys and the share address.

Request contracts move only along
``Requested -> ReKeyPosted -> DataReady -> Completed``, or to ``Cancelled``
from any non-terminal state.
"""

from __future__ import annotations

import enum
import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

__all__ = [
    "LedgerError",
    "BadNonce",
    "InsufficientFunds",
    "UnknownAccount",
    "MalformedTx",
    "DuplicateMac",
    "UnknownSensor",
    "InsufficientDeposit",
    "UnknownContract",
    "NotOwner",
    "NotAuthorized",
    "BadState",
    "TxKind",
    "RequestState",
    "ALLOWED_TRANSITIONS",
    "Tx",
    "Block",
    "Event",
    "Receipt",
    "SensorRecord",
    "RequestContract",
    "ContractState",
    "LedgerConfig",
    "Ledger",
    "make_address",
]


class LedgerError(Exception):
    pass


class BadNonce(LedgerError):
    pass


class InsufficientFunds(LedgerError):
    pass


class UnknownAccount(LedgerError):
    pass


class MalformedTx(LedgerError):
    pass


class DuplicateMac(LedgerError):
    pass


class UnknownSensor(LedgerError):
    pass


class InsufficientDeposit(LedgerError):
    pass


class UnknownContract(LedgerError):
    pass


class NotOwner(LedgerError):
    pass


class NotAuthorized(LedgerError):
    pass


class BadState(LedgerError):
    pass


class TxKind(str, enum.Enum):
    REGISTER_SENSOR = "RegisterSensor"
    SET_CERT = "SetCert"
    REQUEST_DATA = "RequestData"
    POST_REKEY = "PostReKey"
    POST_DATA_ADDR = "PostDataAddr"
    CONFIRM = "Confirm"
    CANCEL = "Cancel"
    TRANSFER = "Transfer"


_PAYLOAD_KEYS = {
    TxKind.REGISTER_SENSOR: {"mac", "price", "description", "cert"},
    TxKind.SET_CERT: {"sensor_id", "cert"},
    TxKind.REQUEST_DATA: {"requester_id", "requester_cert", "sensor_id", "t_from", "t_to", "deposit"},
    TxKind.POST_REKEY: {"contract_id", "rekeys"},
    TxKind.POST_DATA_ADDR: {"contract_id", "share_id"},
    TxKind.CONFIRM: {"contract_id"},
    TxKind.CANCEL: {"contract_id"},
    TxKind.TRANSFER: {"to", "amount"},
}


class RequestState(str, enum.Enum):
    REQUESTED = "Requested"
    REKEY_POSTED = "ReKeyPosted"
    DATA_READY = "DataReady"
    COMPLETED = "Completed"
    CANCELLED = "Cancelled"


ALLOWED_TRANSITIONS = {
    RequestState.REQUESTED: {RequestState.REKEY_POSTED, RequestState.CANCELLED},
    RequestState.REKEY_POSTED: {RequestState.DATA_READY, RequestState.CANCELLED},
    RequestState.DATA_READY: {RequestState.COMPLETED, RequestState.CANCELLED},
    RequestState.COMPLETED: set(),
    RequestState.CANCELLED: set(),
}


def make_address(label: str) -> str:
    """Deterministic 20-byte hex address for a named simulated account."""
    return "0x" + hashlib.sha256(label.encode()).hexdigest()[:40]


def _jsonable(value: Any) -> Any:
    if isinstance(value, (bytes, bytearray)):
        return bytes(value).hex()
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


@dataclass(frozen=True)
class Tx:
    sender: str
    nonce: int
    kind: TxKind
    payload: Mapping[str, Any]
    submitted_at: float

    @property
    def tx_id(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]

    def to_json(self) -> dict:
        return {
            "sender": self.sender,
            "nonce": self.nonce,
            "kind": self.kind.value,
            "payload": _jsonable(dict(self.payload)),
            "submitted_at": self.submitted_at,
        }


@dataclass(frozen=True)
class Block:
    height: int
    timestamp: float
    txs: Tuple[Tx, ...]

    def to_json(self) -> dict:
        return {"height": self.height, "timestamp": self.timestamp, "txs": [t.to_json() for t in self.txs]}


@dataclass(frozen=True)
class Event:
    seq: int
    block: int
    tx_index: Optional[int]  # None for events raised by block-level expiry
    kind: str
    fields: Mapping[str, Any]

    def to_json(self) -> dict:
        return {"block": self.block, "tx_index": self.tx_index, "kind": self.kind, **_jsonable(dict(self.fields))}


@dataclass(frozen=True)
class Receipt:
    tx_id: str
    block: int
    tx_index: int
    timestamp: float
    ok: bool
    result: Any = None
    error: Optional[str] = None
    exc: Optional[Exception] = field(default=None, repr=False, compare=False)


@dataclass
class SensorRecord:
    sensor_id: int
    owner: str
    mac: bytes
    price: int
    description: str
    cert: Optional[bytes]


@dataclass
class RequestContract:
    contract_id: int
    requester: str
    requester_id: int
    requester_cert: bytes
    sensor_id: int
    owner: str
    time_range: Tuple[int, int]
    price: int
    deposit: int
    escrow: int
    created_at: float
    deadline: float
    rekeys: Optional[Tuple[bytes, ...]] = None
    data_addr: Optional[str] = None
    state: RequestState = RequestState.REQUESTED
    history: List[Tuple[RequestState, RequestState]] = field(default_factory=list)


class ContractState:
    """Balances plus both contracts. Mutated only by the ledger's block loop.

    The methods are the contract entry points; each raises a
    :class:`LedgerError` subclass instead of applying a partial update.
    """

    def __init__(self, storage_operator: Optional[str] = None, request_ttl_s: float = 3600.0):
        self.balances: Dict[str, int] = {}
        self.sensors: Dict[int, SensorRecord] = {}
        self.requests: Dict[int, RequestContract] = {}
        self.storage_operator = storage_operator
        self.request_ttl_s = request_ttl_s
        self.now = 0.0
        self._macs: Dict[bytes, int] = {}
        self._pending_events: List[Tuple[str, dict]] = []

    # -- helpers ---------------------------------------------------------

    def _emit(self, kind: str, **fields: Any) -> None:
        self._pending_events.append((kind, fields))

    def _account(self, address: str) -> None:
        if address not in self.balances:
            raise UnknownAccount(address)

    def _contract(self, contract_id: int) -> RequestContract:
        try:
            return self.requests[contract_id]
        except KeyError:
            raise UnknownContract(contract_id) from None

    def _transition(self, c: RequestContract, new: RequestState) -> None:
        if new not in ALLOWED_TRANSITIONS[c.state]:
            raise BadState(f"contract {c.contract_id}: {c.state.value} -> {new.value} not allowed")
        c.history.append((c.state, new))
        c.state = new

    def total_supply(self) -> int:
        return sum(self.balances.values()) + sum(c.escrow for c in self.requests.values())

    # -- registry --------------------------------------------------------

    def register_sensor(self, owner: str, cert: Optional[bytes], price: int, description: str,
                        mac: bytes) -> int:
        self._account(owner)
        mac = bytes(mac)
        if len(mac) != 6:
            raise MalformedTx("mac must be 6 bytes")
        if mac in self._macs:
            raise DuplicateMac(mac.hex(":"))
        if price < 0:
            raise MalformedTx("negative price")
        sensor_id = len(self.sensors) + 1
        self.sensors[sensor_id] = SensorRecord(sensor_id, owner, mac, price, description, cert)
        self._macs[mac] = sensor_id
        self._emit("SensorRegistered", sensor_id=sensor_id, owner=owner, mac=mac, price=price)
        return sensor_id

    def set_cert(self, owner: str, sensor_id: int, cert: bytes) -> None:
        sensor = self.sensor(sensor_id)
        if sensor.owner != owner:
            raise NotOwner(f"{owner} does not own sensor {sensor_id}")
        if sensor.cert is not None:
            raise BadState(f"sensor {sensor_id} already has a certificate")
        sensor.cert = bytes(cert)
        self._emit("CertPublished", sensor_id=sensor_id, cert=sensor.cert)

    def sensor(self, sensor_id: int) -> SensorRecord:
        try:
            return self.sensors[sensor_id]
        except KeyError:
            raise UnknownSensor(sensor_id) from None

    # -- request contracts -----------------------------------------------

    def request_data(self, requester: str, requester_id: int, requester_cert: bytes, sensor_id: int,
                     time_range: Tuple[int, int], deposit: int) -> int:
        self._account(requester)
        sensor = self.sensor(sensor_id)
        t_from, t_to = time_range
        if t_from > t_to:
            raise MalformedTx("empty time range")
        if deposit < sensor.price:
            raise InsufficientDeposit(f"deposit {deposit} < price {sensor.price}")
        if self.balances[requester] < deposit:
            raise InsufficientFunds(f"{requester} cannot cover deposit {deposit}")
        contract_id = len(self.requests) + 1
        self.balances[requester] -= deposit
        self.requests[contract_id] = RequestContract(
            contract_id=contract_id,
            requester=requester,
            requester_id=requester_id,
            requester_cert=bytes(requester_cert),
            sensor_id=sensor_id,
            owner=sensor.owner,
            time_range=(t_from, t_to),
            price=sensor.price,
            deposit=deposit,
            escrow=deposit,
            created_at=self.now,
            deadline=self.now + self.request_ttl_s,
        )
        self._emit("RequestCreated", contract_id=contract_id, sensor_id=sensor_id, owner=sensor.owner,
                   requester=requester, requester_id=requester_id, t_from=t_from, t_to=t_to)
        return contract_id

    def post_rekey(self, owner: str, contract_id: int, rekeys) -> None:
        c = self._contract(contract_id)
        if c.owner != owner:
            raise NotOwner(f"{owner} does not own sensor {c.sensor_id}")
        rekeys = tuple(bytes(rk) for rk in rekeys)
        self._transition(c, RequestState.REKEY_POSTED)
        c.rekeys = rekeys
        self._emit("ReKeyPosted", contract_id=contract_id, n_keys=len(rekeys))

    def post_data_address(self, proxy: str, contract_id: int, share_id: str) -> None:
        c = self._contract(contract_id)
        if self.storage_operator is not None and proxy != self.storage_operator:
            raise NotAuthorized(f"{proxy} is not the storage operator")
        self._transition(c, RequestState.DATA_READY)
        c.data_addr = share_id
        self._emit("DataReady", contract_id=contract_id, requester=c.requester, share_id=share_id)

    def settle(self, contract_id: int, caller: Optional[str] = None) -> None:
        """Pay the owner and refund the rest. ``caller=None`` is the expiry path."""
        c = self._contract(contract_id)
        if caller is not None and caller != c.requester:
            raise NotAuthorized(f"only the requester may confirm contract {contract_id}")
        self._transition(c, RequestState.COMPLETED)
        self.balances[c.owner] += c.price
        self.balances[c.requester] += c.escrow - c.price
        c.escrow = 0
        self._emit("Settled", contract_id=contract_id, paid=c.price, refunded=c.deposit - c.price)

    def cancel(self, contract_id: int, caller: Optional[str] = None) -> None:
        c = self._contract(contract_id)
        if caller is not None and caller not in (c.requester, c.owner):
            raise NotAuthorized(f"{caller} may not cancel contract {contract_id}")
        self._transition(c, RequestState.CANCELLED)
        self.balances[c.requester] += c.escrow
        refunded, c.escrow = c.escrow, 0
        self._emit("Cancelled", contract_id=contract_id, refunded=refunded)

    def expire(self) -> None:
        for c in self.requests.values():
            if c.deadline > self.now or not ALLOWED_TRANSITIONS[c.state]:
                continue
            if c.state is RequestState.DATA_READY:
                self.settle(c.contract_id)
            else:
                self.cancel(c.contract_id)

    def transfer(self, sender: str, to: str, amount: int) -> None:
        self._account(sender)
        self._account(to)
        if amount < 0:
            raise MalformedTx("negative amount")
        if self.balances[sender] < amount:
            raise InsufficientFunds(f"{sender} cannot send {amount}")
        self.balances[sender] -= amount
        self.balances[to] += amount
        self._emit("Transfer", sender=sender, to=to, amount=amount)

    # -- dispatch --------------------------------------------------------

    def apply(self, tx: Tx) -> Any:
        p = tx.payload
        k = tx.kind
        if k is TxKind.REGISTER_SENSOR:
            return self.register_sensor(tx.sender, p["cert"], p["price"], p["description"], p["mac"])
        if k is TxKind.SET_CERT:
            return self.set_cert(tx.sender, p["sensor_id"], p["cert"])
        if k is TxKind.REQUEST_DATA:
            return self.request_data(tx.sender, p["requester_id"], p["requester_cert"], p["sensor_id"],
                                     (p["t_from"], p["t_to"]), p["deposit"])
        if k is TxKind.POST_REKEY:
            return self.post_rekey(tx.sender, p["contract_id"], p["rekeys"])
        if k is TxKind.POST_DATA_ADDR:
            return self.post_data_address(tx.sender, p["contract_id"], p["share_id"])
        if k is TxKind.CONFIRM:
            return self.settle(p["contract_id"], caller=tx.sender)
        if k is TxKind.CANCEL:
            return self.cancel(p["contract_id"], caller=tx.sender)
        if k is TxKind.TRANSFER:
            return self.transfer(tx.sender, p["to"], p["amount"])
        raise MalformedTx(f"unknown kind {k}")


@dataclass
class LedgerConfig:
    block_interval_s: float = 13.0
    block_capacity: int = 10
    seed: int = 0
    tx_fee: int = 0
    request_ttl_s: float = 3600.0


class Ledger:
    """Pending pool, block production and the event log around a :class:`ContractState`."""

    MINER = make_address("miner")

    def __init__(self, config: Optional[LedgerConfig] = None, *, storage_operator: Optional[str] = None):
        self.config = config or LedgerConfig()
        if self.config.block_interval_s <= 0:
            raise ValueError("block interval must be positive")
        if self.config.block_capacity < 0:
            raise ValueError("block capacity must be non-negative")
        self.state = ContractState(storage_operator, self.config.request_ttl_s)
        self.state.balances[self.MINER] = 0
        self.blocks: List[Block] = []
        self.events: List[Event] = []
        self.receipts: Dict[str, Receipt] = {}
        self._rng = random.Random(self.config.seed)
        self._pending: List[Tx] = []
        self._nonces: Dict[str, int] = {}
        self._last_submit: Dict[str, float] = {}
        self._next_block_time = self._rng.expovariate(1.0 / self.config.block_interval_s)

    # -- accounts --------------------------------------------------------

    def create_account(self, address: str, balance: int = 0) -> None:
        """Genesis allocation; only allowed before the first block."""
        if self.blocks:
            raise LedgerError("accounts can only be funded at genesis")
        if address in self.state.balances:
            raise LedgerError(f"account {address} exists")
        if balance < 0:
            raise ValueError("negative genesis balance")
        self.state.balances[address] = balance

    def balance(self, address: str) -> int:
        return self.state.balances[address]

    def next_nonce(self, address: str) -> int:
        return self._nonces.get(address, -1) + 1

    # -- read access -----------------------------------------------------

    @property
    def height(self) -> int:
        return len(self.blocks)

    @property
    def now(self) -> float:
        return self.blocks[-1].timestamp if self.blocks else 0.0

    @property
    def next_block_time(self) -> float:
        return self._next_block_time

    @property
    def pending(self) -> Tuple[Tx, ...]:
        return tuple(self._pending)

    def sensor(self, sensor_id: int) -> SensorRecord:
        return self.state.sensor(sensor_id)

    def contract(self, contract_id: int) -> RequestContract:
        return self.state._contract(contract_id)

    def receipt(self, tx_id: str) -> Optional[Receipt]:
        return self.receipts.get(tx_id)

    def events_since(self, cursor: int) -> List[Event]:
        """Events with ``seq >= cursor``; advance the cursor by ``len(result)``."""
        if cursor < 0:
            raise ValueError("negative cursor")
        return self.events[cursor:]

    # -- transactions ----------------------------------------------------

    def _reserved(self, address: str) -> int:
        total = 0
        for tx in self._pending:
            if tx.sender == address:
                total += self._value(tx) + self.config.tx_fee
        return total

    @staticmethod
    def _value(tx: Tx) -> int:
        if tx.kind is TxKind.TRANSFER:
            return tx.payload["amount"]
        if tx.kind is TxKind.REQUEST_DATA:
            return tx.payload["deposit"]
        return 0

    def submit_tx(self, tx: Tx) -> str:
        if tx.sender not in self.state.balances:
            raise UnknownAccount(tx.sender)
        expected = self.next_nonce(tx.sender)
        if tx.nonce != expected:
            raise BadNonce(f"{tx.sender}: expected nonce {expected}, got {tx.nonce}")
        if set(tx.payload) != _PAYLOAD_KEYS[tx.kind]:
            raise MalformedTx(f"{tx.kind.value} payload keys {sorted(tx.payload)}")
        if tx.submitted_at < self._last_submit.get(tx.sender, float("-inf")):
            raise MalformedTx("submission times must not go backwards per sender")
        if tx.submitted_at < self.now:
            raise MalformedTx("transaction submitted before the current block")
        cost = self._value(tx) + self.config.tx_fee
        if cost and self.state.balances[tx.sender] - self._reserved(tx.sender) < cost:
            raise InsufficientFunds(f"{tx.sender} cannot cover {cost}")
        self._nonces[tx.sender] = tx.nonce
        self._last_submit[tx.sender] = tx.submitted_at
        self._pending.append(tx)
        return tx.tx_id

    def mine_next_block(self) -> Block:
        t = self._next_block_time
        self._next_block_time = t + self._rng.expovariate(1.0 / self.config.block_interval_s)
        ready = sorted((tx for tx in self._pending if tx.submitted_at <= t),
                       key=lambda tx: (tx.submitted_at, tx.sender, tx.nonce))
        chosen = ready[:self.config.block_capacity]
        chosen_ids = {id(tx) for tx in chosen}
        self._pending = [tx for tx in self._pending if id(tx) not in chosen_ids]

        height = len(self.blocks) + 1
        state = self.state
        state.now = t
        for index, tx in enumerate(chosen):
            fee = min(self.config.tx_fee, state.balances[tx.sender])
            state.balances[tx.sender] -= fee
            state.balances[self.MINER] += fee
            try:
                result = state.apply(tx)
                receipt = Receipt(tx.tx_id, height, index, t, True, result)
            except LedgerError as exc:
                state._pending_events = [("TxFailed", {"tx_id": tx.tx_id, "error": type(exc).__name__,
                                                       "detail": str(exc)})]
                receipt = Receipt(tx.tx_id, height, index, t, False, error=type(exc).__name__, exc=exc)
            self.receipts[tx.tx_id] = receipt
            self._flush_events(height, index, tx_id=tx.tx_id)
        state.expire()
        self._flush_events(height, None)

        block = Block(height, t, tuple(chosen))
        self.blocks.append(block)
        return block

    def _flush_events(self, height: int, index: Optional[int], tx_id: Optional[str] = None) -> None:
        for kind, fields in self.state._pending_events:
            if tx_id is not None:
                fields = {**fields, "tx_id": tx_id}
            self.events.append(Event(len(self.events), height, index, kind, fields))
        self.state._pending_events = []

    # -- export ----------------------------------------------------------

    def chain_digest(self) -> str:
        h = hashlib.sha256()
        for block in self.blocks:
            h.update(json.dumps(block.to_json(), sort_keys=True).encode())
        for event in self.events:
            h.update(json.dumps(event.to_json(), sort_keys=True).encode())
        return h.hexdigest()

    def export_events(self, path: Path) -> None:
        with open(path, "w") as fh:
            for event in self.events:
                fh.write(json.dumps(event.to_json(), sort_keys=True) + "\n")
