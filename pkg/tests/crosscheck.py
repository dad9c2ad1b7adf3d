"""Package-versus-oracle comparison loops shared by the unit and acceptance tests."""

import random

from cbpre.group import MockGroup
from cbpre.scheme import (
    CertRequest,
    ca_issue,
    cert_request,
    decrypt1,
    decrypt2,
    derive_public_key,
    encrypt,
    finalize_key,
    reencrypt,
    rekey,
    setup,
)

import oracles as o


def mock_instance_mismatches(q: int, n: int, seed: int) -> list:
    """Run every scheme operation on ``n`` random Mock(q) instances.

    Returns a list of ``(instance, field)`` pairs where the package and the
    straight-line oracle disagree; empty means exact equality throughout.
    """
    group = MockGroup(q, insecure=True)
    rng = random.Random(seed)
    bad = []
    for i in range(n):
        alpha = rng.randrange(1, q)
        id_a, id_b = rng.sample(range(1, 2**32), 2)
        ru_a, rt_a, ru_b, rt_b = (rng.randrange(1, q) for _ in range(4))
        t0 = rng.randrange(2**32)
        m = rng.randbytes(32)

        params, msk = setup(group, alpha=alpha)
        if params.p_alpha != alpha:
            bad.append((i, "p_alpha"))
        keys = []
        for ident, r_u, r_t in ((id_a, ru_a, rt_a), (id_b, ru_b, rt_b)):
            _, req = cert_request(params, ident, secret=r_u)
            resp = ca_issue(params, msk, req, r_t=r_t)
            cert, r_a = o.toy_issue(q, r_u, r_t, alpha, ident)
            if (resp.cert, resp.r_a) != (cert, r_a):
                bad.append((i, "ca_issue"))
            kp = finalize_key(params, r_u, resp, ident)
            d = o.toy_private(q, r_u, cert, r_a, ident)
            if kp.d != d or kp.public != d:
                bad.append((i, "finalize_key"))
            if derive_public_key(params, cert, ident) != o.toy_public_from_cert(q, cert, ident, alpha):
                bad.append((i, "derive_public_key"))
            keys.append(kp)
        kp_a, kp_b = keys

        c = encrypt(params, m, kp_a, t0)
        if (c.c_a, c.h_a, c.s_a) != o.toy_encrypt(q, m, kp_a.d, id_a, t0):
            bad.append((i, "encrypt"))
        if decrypt1(params, c, kp_a) != m:
            bad.append((i, "decrypt1"))
        rk = rekey(params, kp_a, id_b, kp_b.cert, c.meta)
        if rk != o.toy_rekey(q, kp_a.d, id_a, t0, kp_b.public):
            bad.append((i, "rekey"))
        c2 = reencrypt(params, c, rk, id_b)
        if c2.c_b != o.xor(rk, c.c_a) or (c2.c_a, c2.meta, c2.id_b, c2.h_a, c2.s_a) != (
                c.c_a, c.meta, id_b, c.h_a, c.s_a):
            bad.append((i, "reencrypt"))
        out = decrypt2(params, c2, kp_b, kp_a.public)
        expected = o.toy_decrypt2(q, c2.c_b, o.meta_bytes(id_a, t0), c.h_a, c.s_a, kp_b.d, kp_a.public)
        if out != expected or out != m:
            bad.append((i, "decrypt2"))
    return bad


def ecqv_sweep_failures(q: int = 13, identity: int = 0xA1B2C3D4) -> list:
    """Honest keygen over every (r_U, r_t, alpha) in F_q* cubed."""
    group = MockGroup(q, insecure=True)
    failures = []
    for alpha in range(1, q):
        params, msk = setup(group, alpha=alpha)
        for r_u in range(1, q):
            req = CertRequest(identity, group.base_mul(r_u))
            for r_t in range(1, q):
                resp = ca_issue(params, msk, req, r_t=r_t)
                try:
                    kp = finalize_key(params, r_u, resp, identity)
                except Exception as exc:  # noqa: BLE001 - any failure is a finding
                    failures.append((r_u, r_t, alpha, repr(exc)))
                    continue
                lhs = kp.public
                rhs = (o.toy_h1(q, resp.cert, identity) * resp.cert + alpha) % q
                if lhs != rhs:
                    failures.append((r_u, r_t, alpha, "equation"))
    return failures



def random_ledger_run(seed: int, n_txs: int, *, tx_fee: int = 0, capacity: int = 10):
    """Drive a ledger with ``n_txs`` random, often invalid, transactions.

    Returns ``(ledger, supplies, bad_edges)``: total supply after every
    block and every recorded contract transition outside the allowed edges.
    """
    from cbpre.ledger import (
        ALLOWED_TRANSITIONS,
        Ledger,
        LedgerConfig,
        LedgerError,
        Tx,
        TxKind,
        make_address,
    )

    rng = random.Random(seed)
    proxy = make_address("proxy")
    ledger = Ledger(LedgerConfig(block_capacity=capacity, seed=seed, tx_fee=tx_fee, request_ttl_s=600.0),
                    storage_operator=proxy)
    accounts = [make_address(f"acct{i}") for i in range(6)] + [proxy]
    for a in accounts:
        ledger.create_account(a, rng.randrange(0, 5000))
    clocks = {a: 0.0 for a in accounts}
    supplies = [ledger.state.total_supply()]
    kinds = list(TxKind)
    weights = [1, 1, 3, 3, 3, 3, 1, 2]  # declaration order of TxKind

    def pick_contract():
        # mostly live contracts, sometimes a stale or unknown id
        live = [c.contract_id for c in ledger.state.requests.values() if ALLOWED_TRANSITIONS[c.state]]
        if live and rng.random() < 0.8:
            return rng.choice(live)
        return rng.randrange(1, len(ledger.state.requests) + 3)

    def natural_sender(kind, cid):
        c = ledger.state.requests.get(cid)
        if c is None or rng.random() < 0.25:
            return rng.choice(accounts)
        if kind is TxKind.POST_REKEY:
            return c.owner
        if kind is TxKind.POST_DATA_ADDR:
            return proxy
        return c.requester

    def payload(kind, cid):
        return {
            TxKind.REGISTER_SENSOR: lambda: dict(mac=bytes([0, 0, 0, 0, 0, rng.randrange(8)]),
                                                 price=rng.randrange(0, 80), description="s", cert=None),
            TxKind.SET_CERT: lambda: dict(sensor_id=rng.randrange(1, 9), cert=b"\x02" * 33),
            TxKind.REQUEST_DATA: lambda: dict(requester_id=rng.randrange(2**32), requester_cert=b"\x03" * 33,
                                              sensor_id=rng.randrange(1, 9), t_from=0, t_to=rng.randrange(-1, 5),
                                              deposit=rng.randrange(0, 150)),
            TxKind.POST_REKEY: lambda: dict(contract_id=cid, rekeys=[bytes(32)] * rng.randrange(3)),
            TxKind.POST_DATA_ADDR: lambda: dict(contract_id=cid, share_id=rng.randbytes(16).hex()),
            TxKind.CONFIRM: lambda: dict(contract_id=cid),
            TxKind.CANCEL: lambda: dict(contract_id=cid),
            TxKind.TRANSFER: lambda: dict(to=rng.choice(accounts), amount=rng.randrange(-5, 200)),
        }[kind]()

    for i in range(n_txs):
        kind = rng.choices(kinds, weights)[0]
        cid = pick_contract()
        sender = natural_sender(kind, cid)
        clocks[sender] = max(clocks[sender], ledger.now) + rng.expovariate(1.0)
        tx = Tx(sender, ledger.next_nonce(sender), kind, payload(kind, cid), clocks[sender])
        try:
            ledger.submit_tx(tx)
        except LedgerError:
            pass
        if rng.random() < 0.15:
            ledger.mine_next_block()
            supplies.append(ledger.state.total_supply())
    while ledger.pending:
        ledger.mine_next_block()
        supplies.append(ledger.state.total_supply())

    bad_edges = [(c.contract_id, a, b) for c in ledger.state.requests.values()
                 for a, b in c.history if b not in ALLOWED_TRANSITIONS[a]]
    return ledger, supplies, bad_edges
