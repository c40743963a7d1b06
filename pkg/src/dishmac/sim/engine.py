"""Discrete-event simulator of the rendezvous multi-channel MAC family.

One control channel carries request/reply setup handshakes under CSMA with
a uniform contention timer; winners hop to a data channel for exactly one
handshake time and return.  Reception fails only on overlap within radio
range (unit disk, no capture).  Three cooperation modes share the engine:

* noncoop - coordination problems are detected and counted, never acted on;
* ideal   - the problem creator is informed at zero airtime cost whenever
            a witness exists, and backs off;
* real    - the setup splits into request/reply plus confirm/confirm of the
            same total airtime, and witnesses transmit invalidation
            messages that garble the confirmation, forcing a back-off.

Coordination problems and cooperative witnesses are always tallied at the
instant the offending control message ends, whatever the mode does next.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DomainError
from .metrics import SimMetrics
from .topology import Topology

__all__ = [
    "NONCOOP",
    "IDEAL",
    "REAL",
    "CHANNEL_CONFLICT",
    "DEAF_TERMINAL",
    "MccProblem",
    "find_cooperative_nodes",
    "Simulator",
    "simulate",
]

NONCOOP = "noncoop"
IDEAL = "ideal"
REAL = "real"

CHANNEL_CONFLICT = "channel_conflict"
DEAF_TERMINAL = "deaf_terminal"

# message types
_MCRTS, _MCCTS, _PRA, _PRB, _CFA, _CFB, _INV, _DATA = range(8)
_MSG_NAMES = ("McRTS", "McCTS", "PRA", "PRB", "CFA", "CFB", "INV", "DATA")
_SETUP_MSGS = frozenset((_MCRTS, _MCCTS, _PRA, _PRB, _CFA, _CFB))
_PROBLEM_MSGS = frozenset((_MCRTS, _PRA, _MCCTS, _PRB))

# event priorities: transmission ends resolve before channel switches,
# switches before timers, timers before fresh arrivals at equal times
_P_TXEND = 0
_P_RETURN = 2
_P_TIMER = 4
_P_ARRIVAL = 6

# timer kinds
_T_FAMA, _T_NAV, _T_CHWAIT, _T_REPLY, _T_CFA, _T_CFB, _T_BACKOFF = range(7)

# node states
_IDLE = 0
_CONTENDING = 1  # uniform contention timer running
_WAIT_CHANNELS = 2  # all data channels booked; waiting for the earliest expiry
_TX_CTRL = 3
_AWAIT_REPLY = 4  # sent request, reply window open
_AWAIT_CONFIRM = 5  # confirm window open (either role)
_ON_DATA_TX = 6
_ON_DATA_RX = 7
_BACKOFF = 8

_RESPONSIVE_STATES = frozenset((_IDLE, _CONTENDING, _WAIT_CHANNELS, _BACKOFF))


@dataclass(frozen=True)
class MccProblem:
    """A coordination problem created by y's just-finished control message."""

    kind: str  # CHANNEL_CONFLICT or DEAF_TERMINAL
    x: int
    y: int
    x_handshake: int
    x_partner: Optional[int]
    y_partner: Optional[int]


def find_cooperative_nodes(problem, neighbor_sets, overhear_logs, receivers, now):
    """Nodes that witnessed both sides of a coordination problem.

    receivers: ids that cleanly received y's just-sent control message.
    overhear_logs: per-node mapping sender -> (handshake id, expiry) of the
    last cleanly overheard setup message from that sender.  A witness must
    be a common neighbor, must not be one of the four involved parties, and
    must hold a live log entry for the exact handshake x is serving.
    """
    excluded = {problem.x, problem.y, problem.x_partner, problem.y_partner}
    x_nbrs = neighbor_sets[problem.x]
    out = set()
    for v in receivers:
        if v in excluded or v not in x_nbrs:
            continue
        entry = overhear_logs[v].get(problem.x)
        if entry is not None and entry[0] == problem.x_handshake and entry[1] > now:
            out.add(v)
    return out


class _Handshake:
    __slots__ = (
        "hid",
        "t",
        "r",
        "ch",
        "packet",
        "until",
        "got_reply",
        "got_cfa",
        "got_cfb",
        "cancel_reason",
        "invalidated",
        "inv_senders",
    )

    def __init__(self, hid, t, r, ch, packet, until):
        self.hid = hid
        self.t = t
        self.r = r
        self.ch = ch
        self.packet = packet
        self.until = until
        self.got_reply = False
        self.got_cfa = False
        self.got_cfb = False
        self.cancel_reason = None
        self.invalidated = False
        self.inv_senders = None

    def partner(self, node_id):
        return self.r if node_id == self.t else self.t


class _Tx:
    __slots__ = ("txid", "sender", "channel", "start", "end", "mtype", "hs", "nav")

    def __init__(self, txid, sender, channel, start, end, mtype, hs, nav):
        self.txid = txid
        self.sender = sender
        self.channel = channel
        self.start = start
        self.end = end
        self.mtype = mtype
        self.hs = hs
        self.nav = nav


class _Node:
    __slots__ = (
        "nid",
        "neighbors",
        "nbset",
        "state",
        "channel",
        "is_tx",
        "audible",
        "receptions",
        "queue",
        "usage",
        "heard_setup",
        "timer_seq",
        "nav_until",
        "hs",
        "switch_time",
        "pending_retry",
    )

    def __init__(self, nid, neighbors, nbset):
        self.nid = nid
        self.neighbors = neighbors
        self.nbset = nbset
        self.state = _IDLE
        self.channel = 0
        self.is_tx = False
        self.audible = 0
        self.receptions = {}
        self.queue = _Queue()
        self.usage = {}  # handshake id -> (channel, until)
        self.heard_setup = {}  # sender -> (handshake id, until)
        self.timer_seq = 0
        self.nav_until = 0.0
        self.hs = None
        self.switch_time = 0.0
        self.pending_retry = None


class _Queue:
    """FIFO with O(1) popleft and appendleft via a moving head index."""

    __slots__ = ("items", "head")

    def __init__(self):
        self.items = []
        self.head = 0

    def __len__(self):
        return len(self.items) - self.head

    def append(self, x):
        self.items.append(x)

    def popleft(self):
        x = self.items[self.head]
        self.items[self.head] = None
        self.head += 1
        if self.head > 64 and self.head * 2 > len(self.items):
            del self.items[: self.head]
            self.head = 0
        return x

    def appendleft(self, x):
        if self.head > 0:
            self.head -= 1
            self.items[self.head] = x
        else:
            self.items.insert(0, x)

    def peek(self):
        return self.items[self.head]


class Simulator:
    """One deterministic run over a fixed topology."""

    def __init__(
        self,
        topology: Topology,
        lam: float,
        data_bytes: float,
        ctrl_bytes: float = 34.0,
        data_channels: int = 5,
        data_rate: float = 1e6,
        ctrl_rate: Optional[float] = None,
        mode: str = NONCOOP,
        stop_after_packets: int = 20_000,
        seed: int = 0,
        trace: bool = False,
        warmup_frac: float = 0.05,
        channel_policy=None,
        max_events: Optional[int] = None,
        retry_backoff_mean: Optional[float] = None,
    ):
        if mode not in (NONCOOP, IDEAL, REAL):
            raise DomainError(f"unknown mode {mode!r}")
        if lam < 0 or data_bytes <= 0 or ctrl_bytes <= 0:
            raise DomainError("bad traffic parameters")
        if data_channels < 1 or stop_after_packets < 1:
            raise DomainError("need at least one data channel and one packet")
        self.topo = topology
        self.mode = mode
        self.lam = lam
        self.m = data_channels
        self.b = 8.0 * ctrl_bytes / (ctrl_rate if ctrl_rate else data_rate)
        self.T_d = 8.0 * data_bytes / data_rate
        self.data_bits = 8.0 * data_bytes
        self.stop_after = stop_after_packets
        self.seed = seed
        # pause before retransmitting a collided packet; spreads repeat
        # attempts instead of re-contending the instant the node returns,
        # which would snowball the offered load in dense networks
        self.retry_backoff_mean = (
            8.0 * self.T_d if retry_backoff_mean is None else retry_backoff_mean
        )
        self.rng = np.random.default_rng(seed)
        self.trace_enabled = trace
        self.trace: list = []
        self.warmup_count = int(warmup_frac * stop_after_packets)
        self.channel_policy = channel_policy or (
            lambda rng, free: free[int(rng.integers(len(free)))]
        )
        self.max_events = max_events if max_events else 400 * stop_after_packets + 50_000

        self.nodes = [
            _Node(i, list(topology.adjacency[i]), topology.neighbor_sets[i])
            for i in range(topology.n_nodes)
        ]
        self._heard_views = [n.heard_setup for n in self.nodes]
        self.now = 0.0
        self.heap: list = []
        self._seq = 0
        self._next_tx = 0
        self._next_hs = 0
        self.active: dict = {}  # txid -> _Tx
        self.metrics = SimMetrics(
            mode=mode, seed=seed, n_nodes=topology.n_nodes
        )
        self._data_sent = 0
        self._warmup_done = self.warmup_count == 0
        self._stop = False
        self._inflight = 0
        self.problem_log: list = []  # (time, MccProblem, frozenset of witnesses)

    # ---------- scheduling helpers ----------

    def _push(self, time, prio, payload):
        self._seq += 1
        heapq.heappush(self.heap, (time, prio, self._seq, payload))

    def _schedule_timer(self, node, delay, kind, data=None):
        node.timer_seq += 1
        self._push(
            self.now + delay, _P_TIMER, ("timer", node.nid, node.timer_seq, kind, data)
        )

    def _cancel_timer(self, node):
        node.timer_seq += 1

    def _trace(self, node, kind, channel, detail=""):
        if self.trace_enabled:
            self.trace.append((self.now, node, kind, channel, detail))

    # ---------- sensing ----------

    def _sensed_free(self, node):
        return node.audible == 0 and not node.is_tx

    def _recount_audible(self, node):
        count = 0
        ch = node.channel
        nbset = node.nbset
        for tx in self.active.values():
            if tx.channel == ch and tx.sender in nbset and tx.end > self.now:
                count += 1
        node.audible = count

    # ---------- transmissions ----------

    def _start_tx(self, node, mtype, duration, hs, nav=0.0):
        if node.audible > 0 and node.channel == 0:
            # a strictly earlier in-range start means carrier sense failed;
            # data channels carry no carrier sense, only the control one
            for tx in self.active.values():
                if (
                    tx.channel == 0
                    and tx.sender in node.nbset
                    and tx.start < self.now
                ):
                    self.metrics.csma_violations += 1
                    break
        self._next_tx += 1
        tx = _Tx(
            self._next_tx,
            node.nid,
            node.channel,
            self.now,
            self.now + duration,
            mtype,
            hs,
            nav,
        )
        self.active[tx.txid] = tx
        node.is_tx = True
        node.state = _TX_CTRL if node.channel == 0 else node.state
        for key in node.receptions:
            node.receptions[key] = False
        if node.channel == 0:
            self.metrics.control_msgs_sent += 1
            if mtype == _INV:
                self.metrics.coop_msgs_sent += 1
        nodes = self.nodes
        ch = tx.channel
        for w_id in node.neighbors:
            w = nodes[w_id]
            if w.channel != ch:
                continue
            prev = w.audible
            w.audible = prev + 1
            if w.receptions:
                for key in w.receptions:
                    w.receptions[key] = False
            if not w.is_tx:
                w.receptions[tx.txid] = prev == 0
            if prev == 0 and ch == 0 and w.state in (_CONTENDING, _WAIT_CHANNELS):
                # carrier went busy: abandon the wait and receive instead
                self._cancel_timer(w)
                w.state = _IDLE
        self._push(tx.end, _P_TXEND, ("txend", tx.txid))
        self._trace(
            node.nid,
            "CoopMessage" if mtype == _INV else "TxStart",
            ch,
            _MSG_NAMES[mtype],
        )
        return tx

    def _end_tx(self, txid):
        tx = self.active.pop(txid)
        sender = self.nodes[tx.sender]
        sender.is_tx = False
        nodes = self.nodes
        ch = tx.channel
        clean: list = []
        freed: list = []
        for w_id in sender.neighbors:
            w = nodes[w_id]
            if w.channel != ch:
                continue
            w.audible -= 1
            if w.receptions.pop(txid, False):
                clean.append(w_id)
            if w.audible == 0:
                freed.append(w_id)
        self._trace(
            tx.sender,
            "DataHandshakeEnd" if tx.mtype == _DATA else "TxEnd",
            ch,
            _MSG_NAMES[tx.mtype],
        )

        if tx.mtype in _SETUP_MSGS:
            self._note_overheard(tx, clean)
            if tx.mtype in _PROBLEM_MSGS and tx.hs.cancel_reason is None:
                self._handle_mcc(tx, clean)
            self._continue_setup(tx, clean)
        elif tx.mtype == _DATA:
            self._finish_data(tx, clean)
        else:  # INV
            for w_id in clean:
                self._on_clean_reception(nodes[w_id], tx)
            sender.state = _IDLE

        if not self._stop:
            for w_id in freed:
                w = nodes[w_id]
                if w.audible == 0 and w.channel == ch:
                    self._maybe_check_queue(w)
            if sender.channel == ch and not sender.is_tx:
                self._maybe_check_queue(sender)

    # ---------- overhearing bookkeeping ----------

    def _note_overheard(self, tx, clean):
        hs = tx.hs
        nodes = self.nodes
        entry = (hs.ch, hs.until)
        setup = (hs.hid, hs.until)
        nav_until = tx.end + tx.nav
        for w_id in clean:
            w = nodes[w_id]
            w.usage[hs.hid] = entry
            w.heard_setup[tx.sender] = setup
            self._on_clean_reception(w, tx)
            if tx.nav > 0.0 and w_id != hs.r and w_id != hs.t:
                if nav_until > w.nav_until:
                    w.nav_until = nav_until

    # ---------- coordination problems ----------

    def detect_mcc(self, hs, mtype):
        """Problems created by the message of `mtype` that hs just sent."""
        problems = []
        nodes = self.nodes
        if mtype in (_MCRTS, _PRA):
            y = hs.t
            y_partner = hs.r
            xr = nodes[hs.r]
            if xr.channel != 0 and xr.hs is not None:
                problems.append(
                    MccProblem(
                        kind=DEAF_TERMINAL,
                        x=hs.r,
                        y=y,
                        x_handshake=xr.hs.hid,
                        x_partner=xr.hs.partner(hs.r),
                        y_partner=y_partner,
                    )
                )
        else:
            y = hs.r
            y_partner = hs.t
        ch = hs.ch
        best = {}
        for x_id in nodes[y].neighbors:
            x = nodes[x_id]
            if x.channel == ch and x.hs is not None:
                cur = best.get(x.hs.hid)
                # prefer naming the transmitter side of the busy handshake
                if cur is None or x_id == x.hs.t:
                    best[x.hs.hid] = x_id
        for hid, x_id in sorted(best.items()):
            x_hs = nodes[x_id].hs
            problems.append(
                MccProblem(
                    kind=CHANNEL_CONFLICT,
                    x=x_id,
                    y=y,
                    x_handshake=hid,
                    x_partner=x_hs.partner(x_id),
                    y_partner=y_partner,
                )
            )
        return problems

    def _handle_mcc(self, tx, clean):
        hs = tx.hs
        problems = self.detect_mcc(hs, tx.mtype)
        if not problems:
            return
        receivers = clean  # already restricted to y's neighborhood
        nbsets = self.topo.neighbor_sets
        met = self.metrics
        witnessed = []
        for p in problems:
            coop = find_cooperative_nodes(
                p, nbsets, self._heard_views, receivers, self.now
            )
            if p.kind == CHANNEL_CONFLICT:
                met.mcc_channel_conflict += 1
            else:
                met.mcc_deaf_terminal += 1
            if coop:
                met.mcc_with_coop += 1
            witnessed.append((p, coop))
            if self.trace_enabled:
                self.problem_log.append((self.now, p, frozenset(coop)))
        if self.mode == IDEAL:
            self._apply_ideal(hs, witnessed)
        elif self.mode == REAL:
            self._apply_real(hs, witnessed)

    def _apply_ideal(self, hs, witnessed):
        """Zero-cost notification: cancel the setup before anyone switches."""
        reason = None
        for p, coop in witnessed:
            if not coop:
                continue
            if p.kind == DEAF_TERMINAL:
                reason = "deaf"
                break
            reason = reason or "conflict"
        if reason is not None:
            hs.cancel_reason = reason

    def _apply_real(self, hs, witnessed):
        """Witnesses contend to garble the confirmation with INV messages."""
        if hs.inv_senders is None:
            hs.inv_senders = set()
        actors = set()
        for p, coop in witnessed:
            actors.update(coop)
        nodes = self.nodes
        eligible = []
        for v_id in sorted(actors):
            if v_id in hs.inv_senders:
                continue
            v = nodes[v_id]
            if (
                v.channel == 0
                and not v.is_tx
                and v.state in _RESPONSIVE_STATES
                and v.audible == 0
            ):
                eligible.append(v)
        for v in eligible:
            hs.inv_senders.add(v.nid)
            self._cancel_timer(v)
            self._start_tx(v, _INV, self.b / 2.0, hs)

    # ---------- setup-phase continuations ----------

    def _continue_setup(self, tx, clean):
        hs = tx.hs
        nodes = self.nodes
        sender = nodes[tx.sender]
        mtype = tx.mtype
        b = self.b

        if mtype in (_MCRTS, _PRA):
            t = sender
            if hs.cancel_reason == "deaf":
                self._backoff(t, long=True)
                return
            if hs.cancel_reason == "conflict":
                self._backoff(t, long=False)
                return
            r = nodes[hs.r]
            if (
                hs.r in clean
                and r.channel == 0
                and not r.is_tx
                and r.state in _RESPONSIVE_STATES
            ):
                self._cancel_timer(r)
                r.hs = hs
                if mtype == _MCRTS:
                    self._start_tx(r, _MCCTS, b, hs)
                else:
                    self._start_tx(r, _PRB, b / 2.0, hs, nav=b)
            t.state = _AWAIT_REPLY
            t.hs = hs
            window = b if mtype == _MCRTS else b / 2.0
            self._schedule_timer(t, window, _T_REPLY, hs)

        elif mtype == _MCCTS:
            r = sender
            if hs.cancel_reason is not None:
                r.state = _IDLE
                r.hs = None
                return
            self._switch_to_data(r, hs, receiver=True)

        elif mtype == _PRB:
            r = sender
            r.state = _AWAIT_CONFIRM
            self._schedule_timer(r, b / 2.0, _T_CFA, hs)

        elif mtype == _CFA:
            t = sender
            t.state = _AWAIT_CONFIRM
            self._schedule_timer(t, b / 2.0, _T_CFB, hs)

        elif mtype == _CFB:
            self._switch_to_data(sender, hs, receiver=True)

    def _on_clean_reception(self, w, tx):
        """Addressee-side flags; called during overhear processing."""
        hs = tx.hs
        if tx.mtype in (_MCCTS, _PRB) and w.nid == hs.t:
            hs.got_reply = True
        elif tx.mtype == _CFA and w.nid == hs.r:
            hs.got_cfa = True
        elif tx.mtype == _CFB and w.nid == hs.t:
            hs.got_cfb = True
        elif tx.mtype == _INV and w.nid == hs.t and w.state == _AWAIT_REPLY:
            hs.invalidated = True

    # ---------- data phase ----------

    def _switch_to_data(self, node, hs, receiver):
        node.channel = hs.ch
        node.state = _ON_DATA_RX if receiver else _ON_DATA_TX
        node.hs = hs
        node.switch_time = self.now
        node.receptions.clear()
        node.nav_until = 0.0
        self._recount_audible(node)
        self._push(self.now + self.T_d, _P_RETURN, ("return", node.nid))
        self._trace(node.nid, "ChannelSwitch", hs.ch, "enter")
        if not receiver:
            packet = node.queue.popleft()
            assert packet is hs.packet
            self._inflight += 1
            self._data_sent += 1
            if not self._warmup_done and self._data_sent >= self.warmup_count:
                self._warmup_done = True
                self.metrics.warmup_time = self.now
            self._start_tx(node, _DATA, self.T_d, hs)
            if self._data_sent >= self.stop_after:
                self._stop = True

    def _finish_data(self, tx, clean):
        hs = tx.hs
        success = hs.r in clean
        self._inflight -= 1
        met = self.metrics
        if self._warmup_done:
            met.data_handshakes += 1
            if not success:
                met.data_collisions += 1
        if success:
            met.packets_delivered += 1
            if self._warmup_done:
                met.delay_sum += self.now - hs.packet[0]
                met.delay_count += 1
                met.delivered_bits += self.data_bits
        else:
            t = self.nodes[hs.t]
            t.queue.appendleft(hs.packet)
            if self.retry_backoff_mean > 0:
                t.pending_retry = self.rng.exponential(self.retry_backoff_mean)

    def _return_to_control(self, node):
        sojourn = self.now - node.switch_time
        met = self.metrics
        if sojourn < met.sojourn_min:
            met.sojourn_min = sojourn
        if sojourn > met.sojourn_max:
            met.sojourn_max = sojourn
        node.channel = 0
        node.hs = None
        node.receptions.clear()
        node.nav_until = 0.0
        self._recount_audible(node)
        self._trace(node.nid, "ChannelSwitch", 0, "return")
        if node.pending_retry is not None:
            delay = node.pending_retry
            node.pending_retry = None
            node.state = _BACKOFF
            self._schedule_timer(node, delay, _T_BACKOFF)
        else:
            node.state = _IDLE
            self._maybe_check_queue(node)

    # ---------- contention ----------

    def _maybe_check_queue(self, node):
        if (
            node.state != _IDLE
            or node.channel != 0
            or node.is_tx
            or len(node.queue) == 0
            or node.audible > 0
        ):
            return
        if self.now < node.nav_until:
            self._schedule_timer(node, node.nav_until - self.now, _T_NAV)
            return
        node.state = _CONTENDING
        self._schedule_timer(node, self.rng.uniform(0.0, 10.0 * self.b), _T_FAMA)

    def _attempt_rts(self, node):
        now = self.now
        usage = node.usage
        if usage:
            stale = [k for k, v in usage.items() if v[1] <= now]
            for k in stale:
                del usage[k]
        busy = {v[0] for v in usage.values()}
        free = [c for c in range(1, self.m + 1) if c not in busy]
        if not free:
            node.state = _WAIT_CHANNELS
            earliest = min(v[1] for v in usage.values())
            self._schedule_timer(node, earliest - now, _T_CHWAIT)
            return
        ch = self.channel_policy(self.rng, free)
        packet = node.queue.peek()
        self._next_hs += 1
        b = self.b
        if self.mode == REAL:
            first, dur, nav, setup_span = _PRA, b / 2.0, 1.5 * b, 2.0 * b
        else:
            first, dur, nav, setup_span = _MCRTS, b, b, 2.0 * b
        hs = _Handshake(
            self._next_hs,
            node.nid,
            packet[1],
            ch,
            packet,
            now + setup_span + self.T_d,
        )
        node.hs = hs
        self._start_tx(node, first, dur, hs, nav=nav)

    def _backoff(self, node, long):
        node.state = _BACKOFF
        node.hs = None
        mean = self.T_d / 2.0 if long else 10.0 * self.b
        self._schedule_timer(node, self.rng.exponential(mean), _T_BACKOFF)

    # ---------- event handlers ----------

    def _on_arrival(self, node_id):
        node = self.nodes[node_id]
        k = int(self.rng.integers(len(node.neighbors)))
        packet = (self.now, node.neighbors[k])
        node.queue.append(packet)
        self.metrics.packets_arrived += 1
        self._push(
            self.now + self.rng.exponential(1.0 / self.lam),
            _P_ARRIVAL,
            ("arrival", node_id),
        )
        self._trace(node_id, "PacketArrival", node.channel, "")
        if (
            node.state == _IDLE
            and node.channel == 0
            and not node.is_tx
            and len(node.queue) == 1
        ):
            if node.audible == 0 and self.now >= node.nav_until:
                self._attempt_rts(node)
            elif node.audible == 0:
                self._maybe_check_queue(node)

    def _on_timer(self, node_id, seq, kind, data):
        node = self.nodes[node_id]
        if seq != node.timer_seq:
            return
        if self.trace_enabled:
            self._trace(node_id, "TimerExpiry", node.channel, str(kind))
        if kind == _T_FAMA:
            if node.state == _CONTENDING:
                node.state = _IDLE
                self._attempt_rts(node)
        elif kind == _T_NAV:
            node.state = _IDLE
            self._maybe_check_queue(node)
        elif kind == _T_CHWAIT:
            if node.state == _WAIT_CHANNELS:
                node.state = _IDLE
                self._maybe_check_queue(node)
        elif kind == _T_REPLY:
            hs = data
            if hs.cancel_reason is not None:
                self._backoff(node, long=hs.cancel_reason == "deaf")
            elif hs.got_reply:
                if self.mode == REAL:
                    self._start_tx(node, _CFA, self.b / 2.0, hs, nav=self.b / 2.0)
                else:
                    self._switch_to_data(node, hs, receiver=False)
            elif hs.invalidated:
                self._backoff(node, long=True)
            else:
                self._backoff(node, long=False)
        elif kind == _T_CFA:
            hs = data
            if hs.got_cfa:
                self._start_tx(node, _CFB, self.b / 2.0, hs)
            else:
                node.state = _IDLE
                node.hs = None
                self._maybe_check_queue(node)
        elif kind == _T_CFB:
            hs = data
            if hs.got_cfb:
                self._switch_to_data(node, hs, receiver=False)
            else:
                self._backoff(node, long=False)
        elif kind == _T_BACKOFF:
            if node.state == _BACKOFF:
                node.state = _IDLE
                self._maybe_check_queue(node)

    # ---------- main loop ----------

    def run(self) -> SimMetrics:
        heap = self.heap
        if self.lam > 0:
            for node in self.nodes:
                self._push(
                    self.rng.exponential(1.0 / self.lam),
                    _P_ARRIVAL,
                    ("arrival", node.nid),
                )
        events = 0
        while heap and not self._stop:
            time, _prio, _seq, payload = heapq.heappop(heap)
            self.now = time
            kind = payload[0]
            if kind == "txend":
                self._end_tx(payload[1])
            elif kind == "timer":
                self._on_timer(payload[1], payload[2], payload[3], payload[4])
            elif kind == "return":
                self._return_to_control(self.nodes[payload[1]])
            else:  # arrival
                self._on_arrival(payload[1])
            events += 1
            if events >= self.max_events:
                self.metrics.aborted = True
                break
        return self._finalize()

    def _finalize(self) -> SimMetrics:
        met = self.metrics
        met.sim_time = self.now
        met.data_packets_sent = self._data_sent
        met.packets_in_flight = self._inflight
        met.packets_queued = sum(len(n.queue) for n in self.nodes)
        if met.sojourn_min == float("inf"):
            met.sojourn_min = 0.0
        backlog = met.packets_queued + met.packets_in_flight
        met.saturated = met.packets_arrived > 200 and backlog > 0.25 * met.packets_arrived
        return met


def simulate(
    topology: Topology,
    lam: float,
    data_bytes: float,
    **kwargs,
) -> SimMetrics:
    """Build and run one simulation; see Simulator for the knobs."""
    return Simulator(topology, lam, data_bytes, **kwargs).run()
