#!/usr/bin/env python3
"""Generate the synthetic contract corpus under corpus/.

Every contract is assembler source plus an interface file. The Ponzi
templates come with benign twins that share either their data wiring or
their instruction arrangement (see README). Output is deterministic.

    python3 tools/gen_corpus.py [--out corpus] [--seed 7]
"""

import argparse
import json
import random
import shutil
from pathlib import Path

# memory scratch words
MI, MB, MT, MA, MV, MP, MN, ML = 0x80, 0xA0, 0xC0, 0xE0, 0x100, 0x120, 0x140, 0x160
MF, MG = 0x180, 0x1A0
FUNDED_NAMES = ["invest", "enter", "deposit", "join", "contribute", "fund"]
PAYOUT_NAMES = ["payout", "distribute", "pay", "settle", "release", "flush"]


class Contract:
    """Assembler builder with the two generation knobs.

    `order_a` selects the instruction arrangement: commutative operands with
    the stored operand last and statements in listed order; otherwise the
    constant last and statements reversed. `value_amounts` selects whether
    payout amounts are computed from deposited ether or from a call argument.
    """

    def __init__(self, name, rng, order_a, value_amounts=True):
        self.name = name
        self.rng = rng
        self.order_a = order_a
        self.value_amounts = value_amounts
        self.body = []
        self.functions = []  # (name, params, payable, label)
        self.fallback = None
        self.labels = 0
        self.slots = rng.sample(range(1, 200), 24)
        self.initial_storage = {}
        self.initial_balance = None

    def slot(self, i):
        return self.slots[i]

    def fresh(self, base):
        self.labels += 1
        return f"{base}_{self.labels}"

    def emit(self, *lines):
        self.body.extend(lines)

    def bin(self, op, const, stored):
        return f"{const} {stored} {op}" if self.order_a else f"{stored} {const} {op}"

    def stmts(self, parts):
        return " ".join(parts if self.order_a else reversed(parts))

    def func(self, name, params, payable):
        label = self.fresh("fn_" + name)
        self.functions.append((name, params, payable, label))
        self.emit(f"{label}:", "JUMPDEST")
        return label

    def source(self):
        out = ["PUSH1 0 CALLDATALOAD PUSH1 0xe0 SHR"]
        for name, params, _, label in self.functions:
            out.append(f"DUP1 PUSH4 @{name}({','.join(params)}) EQ PUSH2 {label} JUMPI")
        out.append(f"PUSH2 {self.fallback} JUMP" if self.fallback else "PUSH1 0 DUP1 REVERT")
        return "\n".join(out + self.body) + "\n"

    def interface(self, label):
        d = {
            "contract_name": self.name,
            "label": label,
            "functions": [{"name": n, "payable": p, "params": list(ps)} for n, ps, p, _ in self.functions],
        }
        if self.fallback:
            d["fallback"] = {"name": "fallback", "payable": True, "params": []}
        if self.initial_storage:
            d["initial_storage"] = {hex(k): str(v) for k, v in sorted(self.initial_storage.items())}
        if self.initial_balance:
            d["initial_balance"] = str(self.initial_balance)
        return d


def m(off):
    return f"PUSH1 {off} MLOAD" if off < 0x100 else f"PUSH2 {off} MLOAD"


def mstore(off):
    return f"PUSH1 {off} MSTORE" if off < 0x100 else f"PUSH2 {off} MSTORE"


def sl(slot):
    return f"PUSH1 {slot} SLOAD"


def ss(slot):
    return f"PUSH1 {slot} SSTORE"


def send(amount, to):
    return f"PUSH1 0 DUP1 DUP1 DUP1 {amount} {to} GAS CALL POP"


def min_check(c, minimum):
    ok = c.fresh("ok")
    c.emit(
        f"CALLVALUE PUSH8 {minimum} GT ISZERO PUSH2 {ok} JUMPI",
        send("CALLVALUE", "CALLER"),
        "STOP",
        f"{ok}:",
        "JUMPDEST",
    )


def stash_inputs(c, arg_offset=4):
    c.emit(c.stmts(["CALLVALUE " + mstore(MV), f"PUSH1 {arg_offset} CALLDATALOAD " + mstore(MP)]))


def amount_word(c):
    return m(MV) if c.value_amounts else m(MP)


def mapping_slot(c, key, base):
    """keccak(key . base) left on the stack."""
    return f"{key} PUSH1 0 MSTORE PUSH1 {base} PUSH1 32 MSTORE PUSH1 64 PUSH1 0 SHA3"


def map_add(c, key, base, amount):
    """mapping[key] += amount, via the MB scratch word."""
    return mapping_slot(c, key, base) + " " + mstore(MB) + " " + c.bin("ADD", amount, m(MB) + " SLOAD") + " " + m(MB) + " SSTORE"


def record(c, cnt, rec):
    """Append (caller, value, argument) to a three-slot record array."""
    c.emit(
        sl(cnt) + " " + mstore(MI),
        c.bin("ADD", f"PUSH1 {rec}", c.bin("MUL", "PUSH1 3", m(MI))) + " " + mstore(MB),
        c.stmts(
            [
                "CALLER " + m(MB) + " SSTORE",
                m(MV) + " " + c.bin("ADD", "PUSH1 1", m(MB)) + " SSTORE",
                m(MP) + " " + c.bin("ADD", "PUSH1 2", m(MB)) + " SSTORE",
                c.bin("ADD", "PUSH1 1", sl(cnt)) + " " + ss(cnt),
            ]
        ),
    )


def funds_guard(c, amount, done):
    """Jump to `done` unless the amount is covered: by the contract balance
    when payouts come from deposits, by a preset budget otherwise. The other
    quantity is recorded; only memory offsets differ between the variants."""
    budget, snap = c.slot(10), c.slot(11)
    c.initial_storage[budget] = 10**18
    pool, other = (MF, MG) if c.value_amounts else (MG, MF)
    return [
        "ADDRESS BALANCE " + mstore(MF),
        sl(budget) + " " + mstore(MG),
        m(other) + " " + ss(snap),
        f"{amount} {m(pool)} GT ISZERO PUSH2 {done} JUMPI",
    ]


def preset_records(c, cnt, rec, n):
    """Deployed state with n earlier participants in the record array."""
    c.initial_storage[cnt] = n
    for i in range(n):
        c.initial_storage[rec + 3 * i] = 0xE0B0 + i
        c.initial_storage[rec + 3 * i + 1] = 10**16
        c.initial_storage[rec + 3 * i + 2] = 1


def fifo_loop(c, cnt, idx, rec, total, last, rate):
    """Subroutine paying queued records from the cursor; return address on stack."""
    entry, loop, done = c.fresh("payloop"), c.fresh("loop"), c.fresh("done")
    off = 1 if c.value_amounts else 2
    c.emit(
        f"{entry}:",
        "JUMPDEST",
        f"{loop}:",
        "JUMPDEST",
        sl(idx) + " " + mstore(MI),
        f"{sl(cnt)} {m(MI)} LT ISZERO PUSH2 {done} JUMPI",
        c.bin("ADD", f"PUSH1 {rec}", c.bin("MUL", "PUSH1 3", m(MI))) + " " + mstore(MB),
        m(MB) + " SLOAD " + mstore(MT),
        c.bin("MUL", f"PUSH1 {rate}", f"PUSH1 100 {c.bin('ADD', f'PUSH1 {off}', m(MB))} SLOAD DIV") + " " + mstore(MA),
        *funds_guard(c, m(MA), done),
        c.stmts(
            [
                send(m(MA), m(MT)),
                c.bin("ADD", "PUSH1 1", sl(idx)) + " " + ss(idx),
                c.bin("ADD", m(MA), sl(total)) + " " + ss(total),
                "TIMESTAMP " + ss(last),
            ]
        ),
        f"PUSH2 {loop} JUMP",
        f"{done}:",
        "JUMPDEST",
        "JUMP",
    )
    return entry


def call_sub(c, entry):
    back = c.fresh("back")
    c.emit(f"PUSH2 {back} PUSH2 {entry} JUMP", f"{back}:", "JUMPDEST")


def add_fillers(c, k):
    """Unrelated bookkeeping functions; none is payable."""
    pool = ["note", "ping", "owner_set", "toggle", "views"]
    for kind in c.rng.sample(pool, k):
        s = c.slot(20 + pool.index(kind) % 4)
        if kind == "note":
            c.func(c.rng.choice(["setNote", "memo", "tag"]), ["uint256"], False)
            c.emit("PUSH1 4 CALLDATALOAD " + ss(s), "STOP")
        elif kind == "ping":
            c.func(c.rng.choice(["ping", "touch", "bump"]), [], False)
            c.emit(c.bin("ADD", "PUSH1 1", sl(s)) + " " + ss(s), "STOP")
        elif kind == "owner_set":
            c.func(c.rng.choice(["setOwner", "transferOwnership"]), ["address"], False)
            c.emit("PUSH1 4 CALLDATALOAD " + ss(s), "STOP")
        elif kind == "toggle":
            c.func(c.rng.choice(["pause", "toggle", "flip"]), [], False)
            c.emit(f"{sl(s)} ISZERO " + ss(s), "STOP")
        else:
            c.func(c.rng.choice(["total", "count", "status"]), [], False)
            c.emit(f"{sl(s)} PUSH1 0 MSTORE PUSH1 32 PUSH1 0 RETURN")


# ---------------------------------------------------------------- templates


def fifo_queue(c):
    """Deposits queue up; each deposit pays queued entries a fixed share."""
    cnt, idx, total, last = c.slot(0), c.slot(1), c.slot(3), c.slot(4)
    rec = 200 + c.rng.randrange(40)
    rate = c.rng.choice([3, 5, 7, 10])
    minimum = c.rng.choice([10**15, 10**16])
    preset_records(c, cnt, rec, 3)
    c.initial_balance = 10**17
    fn = c.func(c.rng.choice(FUNDED_NAMES), ["uint8"], True)
    min_check(c, minimum)
    stash_inputs(c)
    record(c, cnt, rec)
    back = c.fresh("back")
    c.emit(f"PUSH2 {back} PUSH2 payloop_entry JUMP", f"{back}:", "JUMPDEST STOP")
    c.func(c.rng.choice(PAYOUT_NAMES), [], False)
    call_sub(c, "payloop_entry")
    c.emit("STOP")
    if c.rng.random() < 0.5:
        c.fallback = c.fresh("fallback")
        c.emit(f"{c.fallback}:", "JUMPDEST", f"PUSH2 {fn} JUMP")
    entry = fifo_loop(c, cnt, idx, rec, total, last, rate)
    c.emit("payloop_entry:", "JUMPDEST", f"PUSH2 {entry} JUMP")


def referral_tree(c):
    """Deposits name a referrer; the referrer chain receives bonuses."""
    parent, depo, total = c.slot(0), c.slot(1), c.slot(2)
    rate = c.rng.choice([5, 10, 20])
    c.func(c.rng.choice(FUNDED_NAMES), ["address", "uint8"], True)
    min_check(c, c.rng.choice([10**15, 10**16]))
    c.emit(
        c.stmts(
            [
                "CALLVALUE " + mstore(MV),
                "PUSH1 4 CALLDATALOAD " + mstore(MN),
                "PUSH1 36 CALLDATALOAD " + mstore(MP),
            ]
        ),
        m(MN) + " " + mapping_slot(c, "CALLER", parent) + " SSTORE",
        map_add(c, "CALLER", depo, m(MV)),
        "PUSH1 0 " + mstore(ML),
    )
    loop, done = c.fresh("up"), c.fresh("done")
    c.emit(
        f"{loop}:",
        "JUMPDEST",
        f"{m(MN)} ISZERO PUSH2 {done} JUMPI",
        f"PUSH1 3 {m(ML)} LT ISZERO PUSH2 {done} JUMPI",
        c.bin("MUL", f"PUSH1 {rate}", f"PUSH1 100 {amount_word(c)} DIV") + f" {m(ML)} SHR " + mstore(MA),
        *funds_guard(c, m(MA), done),
        c.stmts(
            [
                send(m(MA), m(MN)),
                c.bin("ADD", m(MA), sl(total)) + " " + ss(total),
                c.bin("ADD", "PUSH1 1", m(ML)) + " " + mstore(ML),
                mapping_slot(c, m(MN), parent) + " SLOAD " + mstore(MN),
            ]
        ),
        f"PUSH2 {loop} JUMP",
        f"{done}:",
        "JUMPDEST STOP",
    )
    c.func(c.rng.choice(["withdraw", "claim", "exit"]), [], False)
    c.emit(
        mapping_slot(c, "CALLER", depo) + " DUP1 SLOAD SWAP1 PUSH1 0 SWAP1 SSTORE " + mstore(MA),
        send(m(MA), "CALLER"),
        "STOP",
    )


def chain_relay(c):
    """Each deposit forwards a share of itself to the previous depositor."""
    cnt, rec, total = c.slot(0), 200 + c.rng.randrange(40), c.slot(2)
    share = c.rng.choice([80, 90, 95])
    preset_records(c, cnt, rec, 1)
    c.func(c.rng.choice(FUNDED_NAMES), ["uint8"], True)
    min_check(c, c.rng.choice([10**15, 10**16]))
    stash_inputs(c)
    record(c, cnt, rec)
    skip = c.fresh("first")
    c.emit(
        f"{m(MI)} ISZERO PUSH2 {skip} JUMPI",
        f"PUSH1 3 {m(MB)} SUB SLOAD " + mstore(MT),
        c.bin("MUL", f"PUSH1 {share}", f"PUSH1 100 {amount_word(c)} DIV") + " " + mstore(MA),
        *funds_guard(c, m(MA), skip),
        c.stmts(
            [
                send(m(MA), m(MT)),
                c.bin("ADD", m(MA), sl(total)) + " " + ss(total),
                "TIMESTAMP " + ss(c.slot(5)),
            ]
        ),
        f"{skip}:",
        "JUMPDEST STOP",
    )
    c.func(c.rng.choice(["lastPaid", "total", "stats"]), [], False)
    c.emit(f"{sl(total)} PUSH1 0 MSTORE PUSH1 32 PUSH1 0 RETURN")


def token_dividend(c):
    """Purchases mint units; every purchase pays all holders per unit held."""
    cnt, rec, supply = c.slot(0), 200 + c.rng.randrange(40), c.slot(1)
    price = c.rng.choice([2, 4, 8])
    preset_records(c, cnt, rec, 3)
    c.func(c.rng.choice(["buy", "purchase", "mint", "invest"]), ["uint8"], True)
    min_check(c, c.rng.choice([10**15, 10**16]))
    stash_inputs(c)
    record(c, cnt, rec)
    c.emit(c.bin("ADD", amount_word(c), sl(supply)) + " " + ss(supply), "PUSH1 0 " + mstore(ML))
    loop, done = c.fresh("holders"), c.fresh("done")
    c.emit(
        f"{loop}:",
        "JUMPDEST",
        f"{sl(cnt)} {m(ML)} LT ISZERO PUSH2 {done} JUMPI",
        c.bin("ADD", f"PUSH1 {rec}", c.bin("MUL", "PUSH1 3", m(ML))) + " " + mstore(MB),
        m(MB) + " SLOAD " + mstore(MT),
        c.bin("MUL", f"PUSH1 {price}", f"PUSH2 1000 {amount_word(c)} DIV") + " " + mstore(MA),
        *funds_guard(c, m(MA), done),
        c.stmts(
            [
                send(m(MA), m(MT)),
                c.bin("ADD", "PUSH1 1", m(ML)) + " " + mstore(ML),
                "TIMESTAMP " + ss(c.slot(6)),
            ]
        ),
        f"PUSH2 {loop} JUMP",
        f"{done}:",
        "JUMPDEST STOP",
    )
    c.func(c.rng.choice(["transfer", "give"]), ["address", "uint8"], False)
    c.emit("PUSH1 36 CALLDATALOAD PUSH1 4 CALLDATALOAD " + ss(c.slot(7)) + " " + ss(c.slot(8)), "STOP")


PONZI_TEMPLATES = {
    "fifo": fifo_queue,
    "referral": referral_tree,
    "chain": chain_relay,
    "dividend": token_dividend,
}


# ------------------------------------------------------- unrelated benign


def gamble(c):
    """Bet on the block time; winners are paid double."""
    bets, wins = c.slot(0), c.slot(1)
    c.func(c.rng.choice(["bet", "play", "guess"]), ["uint8"], True)
    lose = c.fresh("lose")
    c.emit(
        c.stmts(["CALLER " + ss(bets), "CALLVALUE " + ss(bets + 1)]),
        f"PUSH1 4 CALLDATALOAD PUSH1 {c.rng.choice([2, 4, 10])} TIMESTAMP MOD EQ ISZERO PUSH2 {lose} JUMPI",
        send(c.bin("MUL", "PUSH1 2", "CALLVALUE"), "CALLER"),
        c.bin("ADD", "PUSH1 1", sl(wins)) + " " + ss(wins),
        f"{lose}:",
        "JUMPDEST STOP",
    )
    c.func("withdrawHouse", [], False)
    ok = c.fresh("owner")
    c.emit(
        f"CALLER {sl(c.slot(2))} EQ PUSH2 {ok} JUMPI PUSH1 0 DUP1 REVERT",
        f"{ok}:",
        "JUMPDEST",
        send("ADDRESS BALANCE", "CALLER"),
        "STOP",
    )


def wallet(c):
    """Per-account balances with withdrawal of any amount held."""
    bal = c.slot(0)
    c.func(c.rng.choice(["deposit", "topUp", "store"]), [], True)
    c.emit(map_add(c, "CALLER", bal, "CALLVALUE"), "STOP")
    c.func(c.rng.choice(["withdraw", "take"]), ["uint256"], False)
    fail = c.fresh("fail")
    c.emit(
        "PUSH1 4 CALLDATALOAD " + mstore(MA),
        mapping_slot(c, "CALLER", bal) + " " + mstore(MB),
        f"{m(MA)} {m(MB)} SLOAD LT PUSH2 {fail} JUMPI",
        f"{m(MA)} {m(MB)} SLOAD SUB {m(MB)} SSTORE",
        send(m(MA), "CALLER"),
        "STOP",
        f"{fail}:",
        "JUMPDEST PUSH1 0 DUP1 REVERT",
    )


def escrow(c):
    """Payer locks funds for a payee; payer releases or the arbiter refunds."""
    payer, payee, amount, arb = c.slot(0), c.slot(1), c.slot(2), c.slot(3)
    c.initial_storage[arb] = 0xABCD
    c.func(c.rng.choice(["open", "lock", "create"]), ["address"], True)
    c.emit(c.stmts(["CALLER " + ss(payer), "PUSH1 4 CALLDATALOAD " + ss(payee), "CALLVALUE " + ss(amount)]), "STOP")
    c.func("release", [], False)
    ok = c.fresh("ok")
    c.emit(
        f"CALLER {sl(payer)} EQ PUSH2 {ok} JUMPI PUSH1 0 DUP1 REVERT",
        f"{ok}:",
        "JUMPDEST",
        send(sl(amount), sl(payee)),
        "PUSH1 0 " + ss(amount),
        "STOP",
    )
    c.func("refund", [], False)
    ok = c.fresh("ok")
    c.emit(
        f"CALLER {sl(arb)} EQ PUSH2 {ok} JUMPI PUSH1 0 DUP1 REVERT",
        f"{ok}:",
        "JUMPDEST",
        send(sl(amount), sl(payer)),
        "PUSH1 0 " + ss(amount),
        "STOP",
    )


def token(c):
    """Fixed-price token sale with transfers; ether stays with the owner."""
    bal, owner = c.slot(0), c.slot(1)
    c.func(c.rng.choice(["buyTokens", "mint"]), [], True)
    c.emit(
        map_add(c, "CALLER", bal, c.bin("MUL", "PUSH1 100", "CALLVALUE")),
        send("CALLVALUE", sl(owner)),
        "STOP",
    )
    c.func("transfer", ["address", "uint256"], False)
    fail = c.fresh("fail")
    c.emit(
        "PUSH1 36 CALLDATALOAD " + mstore(MA),
        mapping_slot(c, "CALLER", bal) + " " + mstore(MB),
        f"{m(MA)} {m(MB)} SLOAD LT PUSH2 {fail} JUMPI",
        f"{m(MA)} {m(MB)} SLOAD SUB {m(MB)} SSTORE",
        map_add(c, "PUSH1 4 CALLDATALOAD", bal, m(MA)),
        "STOP",
        f"{fail}:",
        "JUMPDEST PUSH1 0 DUP1 REVERT",
    )


def registry(c):
    """Names registered for a fee; owners can hand names over."""
    names, fee = c.slot(0), c.rng.choice([10**15, 10**16])
    c.func(c.rng.choice(["register", "claimName"]), ["bytes32"], True)
    fail = c.fresh("fail")
    c.emit(
        f"PUSH8 {fee} CALLVALUE LT PUSH2 {fail} JUMPI",
        mapping_slot(c, "PUSH1 4 CALLDATALOAD", names) + " DUP1 SLOAD PUSH2 " + fail + " JUMPI",
        "CALLER SWAP1 SSTORE STOP",
        f"{fail}:",
        "JUMPDEST PUSH1 0 DUP1 REVERT",
    )
    c.func("handOver", ["bytes32", "address"], False)
    fail = c.fresh("fail")
    c.emit(
        mapping_slot(c, "PUSH1 4 CALLDATALOAD", names) + " DUP1 SLOAD CALLER EQ ISZERO PUSH2 " + fail + " JUMPI",
        "PUSH1 36 CALLDATALOAD SWAP1 SSTORE STOP",
        f"{fail}:",
        "JUMPDEST PUSH1 0 DUP1 REVERT",
    )


def crowdfund(c):
    """Contributions accumulate until a goal, then go to the beneficiary."""
    raised, ben, goal = c.slot(0), c.slot(1), c.slot(2)
    c.initial_storage[goal] = c.rng.choice([5 * 10**16, 10**17])
    c.func(c.rng.choice(["contribute", "pledge", "back"]), [], True)
    c.emit(
        map_add(c, "CALLER", c.slot(3), "CALLVALUE"),
        c.bin("ADD", "CALLVALUE", sl(raised)) + " " + ss(raised),
        "STOP",
    )
    c.func("finalize", [], False)
    wait = c.fresh("wait")
    c.emit(
        f"{sl(goal)} {sl(raised)} LT PUSH2 {wait} JUMPI",
        send(sl(raised), sl(ben)),
        "PUSH1 0 " + ss(raised),
        f"{wait}:",
        "JUMPDEST STOP",
    )


def auction(c):
    """Highest bid wins; the outbid bidder is refunded."""
    top, bidder = c.slot(0), c.slot(1)
    c.func(c.rng.choice(["bid", "offer"]), [], True)
    low = c.fresh("low")
    c.emit(
        f"{sl(top)} CALLVALUE GT ISZERO PUSH2 {low} JUMPI",
        send(sl(top), sl(bidder)),
        c.stmts(["CALLER " + ss(bidder), "CALLVALUE " + ss(top)]),
        "STOP",
        f"{low}:",
        "JUMPDEST PUSH1 0 DUP1 REVERT",
    )
    c.func("close", [], False)
    c.emit("PUSH1 1 " + ss(c.slot(2)), "STOP")


BENIGN_TEMPLATES = {
    "gamble": gamble,
    "wallet": wallet,
    "escrow": escrow,
    "token": token,
    "registry": registry,
    "crowdfund": crowdfund,
    "auction": auction,
}


# ------------------------------------------------------------- listing one

LISTING_ONE = """\
; persons: dynamic array at slot 0, elements (etherAddress, amount) at keccak(0) + 2*i
; payoutIdx: slot 1
PUSH1 0 CALLDATALOAD PUSH1 0xe0 SHR
DUP1 PUSH4 @enter() EQ PUSH2 enter JUMPI
DUP1 PUSH4 @pay() EQ PUSH2 pay JUMPI
PUSH1 0 DUP1 REVERT

enter:
JUMPDEST
; if (msg.value < 1/100 ether) { msg.sender.send(msg.value); return; }
PUSH7 10000000000000000 CALLVALUE LT ISZERO PUSH2 enter_ok JUMPI
PUSH1 0 DUP1 DUP1 DUP1 CALLVALUE CALLER GAS CALL POP STOP
enter_ok:
JUMPDEST
; amount = msg.value; idx = persons.length; persons.length += 1
CALLVALUE
PUSH1 0 SLOAD
PUSH1 1 DUP2 ADD PUSH1 0 SSTORE
; persons[idx].etherAddress = msg.sender
PUSH1 0 PUSH1 0 MSTORE PUSH1 32 PUSH1 0 SHA3
PUSH1 2 DUP3 MUL ADD
CALLER DUP2 SSTORE
; persons[idx].amount = amount
DUP3 SWAP1 PUSH1 1 ADD SSTORE
POP POP STOP

pay:
JUMPDEST
loop:
JUMPDEST
; persons[payoutIdx], bounds checked
PUSH1 1 SLOAD DUP1 PUSH1 0 SLOAD GT PUSH2 in_range JUMPI
PUSH1 0 DUP1 REVERT
in_range:
JUMPDEST
PUSH1 0 PUSH1 0 MSTORE PUSH1 32 PUSH1 0 SHA3
SWAP1 PUSH1 2 MUL ADD
; amount / 100 * 500
DUP1 PUSH1 1 ADD SLOAD PUSH1 100 SWAP1 DIV PUSH2 500 MUL
; while (this.balance > ...)
DUP1 ADDRESS BALANCE GT ISZERO PUSH2 done JUMPI
; persons[payoutIdx].etherAddress.send(transactionAmount)
SWAP1 SLOAD
PUSH1 0 DUP1 DUP1 DUP1 DUP6 DUP6 GAS CALL POP
POP POP
; payoutIdx += 1
PUSH1 1 SLOAD PUSH1 1 ADD PUSH1 1 SSTORE
PUSH2 loop JUMP
done:
JUMPDEST STOP
"""

LISTING_ONE_IFACE = {
    "contract_name": "listing_one",
    "label": "ponzi",
    "functions": [
        {"name": "enter", "payable": True, "params": []},
        {"name": "pay", "payable": False, "params": []},
    ],
    # deployed state: three earlier entries of 0.001 ether and 0.05 ether held
    "initial_storage": {
        "0x0": "3",
        **{hex(0x290DECD9548B62A8D60345A988386FC84BA6BC95484008F6362F93160EF3E563 + 2 * i): str(0xE0A0 + i) for i in range(3)},
        **{hex(0x290DECD9548B62A8D60345A988386FC84BA6BC95484008F6362F93160EF3E563 + 2 * i + 1): str(10**15) for i in range(3)},
    },
    "initial_balance": str(5 * 10**16),
}


# ------------------------------------------------------------------ driver

ROUND_TRIP = """\
; fifty instructions covering every immediate width class
PUSH1 0x01 PUSH2 0x0203 PUSH3 0x040506 PUSH4 0x0708090a ADD MUL SUB DIV
SDIV MOD SMOD ADDMOD MULMOD EXP SIGNEXTEND LT GT SLT SGT EQ ISZERO AND OR XOR NOT BYTE
SHL SHR SAR SHA3 ADDRESS BALANCE ORIGIN CALLER CALLVALUE CALLDATALOAD CALLDATASIZE
POP MLOAD MSTORE SLOAD SSTORE JUMPDEST PUSH32 0x0102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f20
DUP16 SWAP16 TIMESTAMP BLOCKHASH CALLDATACOPY STOP
"""


def write(out, kind, name, c_or_src, iface):
    d = out / kind
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{name}.asm").write_text(c_or_src)
    (d / f"{name}.json").write_text(json.dumps(iface, indent=2) + "\n")


def build(template, name, rng, order_a, value_amounts, label):
    c = Contract(name, rng, order_a, value_amounts)
    template(c)
    add_fillers(c, rng.choice([0, 1, 2]))
    return c.source(), c.interface(label)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="corpus")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    out = Path(args.out)
    if out.exists():
        shutil.rmtree(out)
    rng = random.Random(args.seed)
    write(out, "ponzi", "listing_one", LISTING_ONE, LISTING_ONE_IFACE)
    # (order_a, value_amounts, label, copies)
    variants = [
        (True, True, "ponzi", 3),
        (False, True, "benign", 2),
        (True, False, "benign", 2),
        (False, False, "benign", 1),
    ]
    tags = {(True, True): "", (False, True): "_rebate", (True, False): "_tips", (False, False): "_plain"}
    for tname, template in PONZI_TEMPLATES.items():
        for order_a, value_amounts, label, copies in variants:
            for k in range(copies):
                name = f"{tname}{tags[(order_a, value_amounts)]}_{k}"
                src, iface = build(template, name, rng, order_a, value_amounts, label)
                write(out, label, name, src, iface)
    for tname, template in BENIGN_TEMPLATES.items():
        for k in range(2):
            name = f"{tname}_{k}"
            src, iface = build(template, name, rng, rng.random() < 0.5, False, "benign")
            write(out, "benign", name, src, iface)
    (out / "roundtrip.txt").write_text(ROUND_TRIP)


if __name__ == "__main__":
    main()
