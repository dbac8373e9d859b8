"""Self-configuring policy detection over the radar video stream.

The collector decodes each packet (header only), checks the sender against
the configured antennas, and maintains per-antenna sweep bookkeeping: which
azimuth arcs the current revolution has already covered (wire-count exact),
the running revolution aggregate (span statistics, header-field frequency
distributions, entry count), and a bounded history of closed aggregates.
Aggregation closes when a counted packet's start azimuth wraps below its
predecessor's.  Two kinds of packet never count as sweep entries: a packet
whose arc duplicates azimuth already swept this revolution (a rotating
antenna cannot revisit an angle), and a degenerate full-circle packet
(start == end), which carries no sweep-step identity at all -- both still
flow to the policies, flagged as such.

Policies arrive as candidates: an activation test plus a transformation
that instantiates the runtime policy from the observed traffic.  The
lifecycle follows the candidate store contract: undecided keeps the
candidate, false drops it for good, true installs the transformed policy
and drops the candidate.  The six built-ins are data-driven instances of
two kinds:

  categorical  P1 center_bias, P2 n_cells -- activate when one value's
               empirical frequency exceeds 0.99 across the learning window;
               flag any sweep-step packet carrying a different value.
  statistical  P3 span inside mean +/- 3 sigma (with a one-LSB quantization
               guard); P4 message_id monotone modulo its 24-bit wrap;
               P5 one sweep entry per azimuth step and the per-revolution
               entry count inside its band; P6 revolutions per fixed period
               inside its band.

The detector is a pure observer: it never publishes, and it never mutates
or drops traffic.
"""

from __future__ import annotations

import json
import math
import statistics
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

from . import asterix
from .asterix import AntennaId, cell_width_m
from .sectors import AZ_COUNTS, AnnulusSector, az_to_counts

PASS, VIOLATION, UNDECIDED = "pass", "violation", "undecided"

ID_WRAP = 1 << 24
AZ_GUARD_DEG = 360.0 / AZ_COUNTS  # one wire LSB of azimuth


def id_behind(message_id: int, reference: int) -> bool:
    """True when message_id sits behind reference modulo the 24-bit wrap."""
    return (message_id - reference) % ID_WRAP > ID_WRAP // 2


class PacketFacts(NamedTuple):
    """Per-packet feature block: decoded header values plus the stream
    facts the aggregator derived while placing the packet in its sweep."""
    start_az: float
    end_az: float
    span: float
    center_bias: int
    cell_dur: float
    cell_res: int
    n_cells: int
    message_id: int
    time_of_day: float
    arrival: float
    countable: bool
    dup_coverage: bool
    prev_message_id: int | None
    revolution: int


@dataclass(frozen=True)
class RevolutionAggregate:
    mu_az: float                    # mean azimuthal span, degrees
    s_az: float                     # biased sample variance of the span
    entries: int                    # counted packets in the revolution
    center_bias_freq: dict
    n_cells_freq: dict
    wall_duration: float            # seconds from first to closing packet
    t_open: float
    t_close: float


class Feature(NamedTuple):
    antenna: AntennaId
    d: PacketFacts
    a: RevolutionAggregate | None          # latest closed aggregate
    a_n: tuple                             # historian view (oldest first)
    closed: RevolutionAggregate | None     # aggregate closed by this packet


@dataclass(frozen=True)
class Anomaly:
    policy_id: str
    description: str
    antenna: AntennaId | None
    sector: AnnulusSector | None
    time: float
    feature: dict   # offending packet snapshot


def _packet_sector(d: PacketFacts) -> AnnulusSector:
    cw = cell_width_m(d.cell_dur)
    a_min, a_max = d.start_az, d.end_az
    if d.span >= 360.0:
        a_min, a_max = 0.0, 360.0
    return AnnulusSector(a_min, a_max, d.center_bias * cw,
                         (d.center_bias + d.n_cells) * cw)


def _facts_snapshot(antenna: AntennaId, d: PacketFacts) -> dict:
    return {
        "antenna": [antenna.sac, antenna.sic, antenna.source],
        "start_az": round(d.start_az, 4), "end_az": round(d.end_az, 4),
        "span": round(d.span, 4), "center_bias": d.center_bias,
        "n_cells": d.n_cells, "message_id": d.message_id,
        "cell_dur": d.cell_dur, "arrival": d.arrival,
    }


class _SweepState:
    """Per-antenna revolution bookkeeping (wire azimuth counts)."""

    def __init__(self, historian_depth: int):
        self.coverage: list[tuple[int, int]] = []   # half-open covered arcs
        self.cov_end = 0                            # fast path: sweep head
        self.prev_start: int | None = None
        self.prev_id: int | None = None
        self.revolution = 0
        self.entries = 0
        self.span_sum = 0.0
        self.span_sq = 0.0
        self.bias_freq: Counter = Counter()
        self.ncells_freq: Counter = Counter()
        self.t_open: float | None = None
        self.latest: RevolutionAggregate | None = None
        self.history: deque = deque(maxlen=historian_depth)

    def overlaps(self, s: int, e: int) -> bool:
        if s < e and s >= self.cov_end:   # at or past the sweep head
            return False
        arcs = [(s, e)] if s < e else [(s, AZ_COUNTS), (0, e)]
        for lo, hi in arcs:
            if lo >= hi:
                continue
            for a, b in self.coverage:
                if a < hi and lo < b:
                    return True
        return False

    def add_arc(self, s: int, e: int) -> None:
        arcs = [(s, e)] if s < e else [(s, AZ_COUNTS), (0, e)]
        for arc in arcs:
            if arc[0] < arc[1]:
                self.coverage.append(arc)
                self.cov_end = max(self.cov_end, arc[1])

    def close_revolution(self, t_close: float) -> RevolutionAggregate:
        n = max(self.entries, 1)
        mu = self.span_sum / n
        var = max(self.span_sq / n - mu * mu, 0.0)
        agg = RevolutionAggregate(
            mu_az=mu, s_az=var, entries=self.entries,
            center_bias_freq=dict(self.bias_freq),
            n_cells_freq=dict(self.ncells_freq),
            wall_duration=t_close - (self.t_open if self.t_open is not None else t_close),
            t_open=self.t_open if self.t_open is not None else t_close,
            t_close=t_close,
        )
        self.latest = agg
        self.history.append(agg)
        self.coverage = []
        self.cov_end = 0
        self.revolution += 1
        self.entries = 0
        self.span_sum = 0.0
        self.span_sq = 0.0
        self.bias_freq = Counter()
        self.ncells_freq = Counter()
        self.t_open = None
        return agg


class Collector:
    """Analyzer + aggregator + historian; builds the feature of each packet."""

    def __init__(self, antennas: list[AntennaId], historian_depth: int = 120):
        self.antennas = {a.key(): a for a in antennas}
        self.by_id = {(a.sac, a.sic): a for a in antennas}
        self.historian_depth = historian_depth
        self.state: dict[tuple, _SweepState] = {
            a.key(): _SweepState(historian_depth) for a in antennas
        }
        self.latest_feature: dict[tuple, Feature] = {}

    def collect(self, payload: bytes, arrival: float,
                source: str) -> tuple[Feature | None, list, Anomaly | None]:
        """Digest one packet: returns (feature, feature group, early anomaly).
        Source/decode failures yield no feature, only the anomaly."""
        try:
            h = asterix.decode_header(payload)
        except asterix.DecodeError as e:
            return None, [], Anomaly(
                policy_id="decode", description=f"undecodable record: {e}",
                antenna=None, sector=None, time=arrival,
                feature={"source": source, "size": len(payload)})
        antenna = self.antennas.get((h.sac, h.sic, source))
        if antenna is None:
            return None, [], Anomaly(
                policy_id="source",
                description=f"traffic from unconfigured antenna "
                            f"SAC={h.sac} SIC={h.sic} at {source}",
                antenna=None, sector=None, time=arrival,
                feature={"source": source, "sac": h.sac, "sic": h.sic})

        st = self.state[antenna.key()]
        span = h.span
        countable = span < 360.0
        dup = False
        closed = None
        if countable:
            s = az_to_counts(h.start_az)
            e = az_to_counts(h.end_az)
            # A start wrapping far below the sweep head begins the next
            # revolution; one just behind it is a straggler, judged by
            # coverage below.
            if st.prev_start is not None and s < st.prev_start and \
                    st.prev_start - s > AZ_COUNTS // 2:
                closed = st.close_revolution(arrival)
            dup = st.overlaps(s, e)
            if not dup:
                if st.t_open is None:
                    st.t_open = arrival
                st.add_arc(s, e)
                st.prev_start = s
                st.entries += 1
                st.span_sum += span
                st.span_sq += span * span
                st.bias_freq[h.center_bias] += 1
                st.ncells_freq[h.n_cells] += 1

        facts = PacketFacts(
            start_az=h.start_az, end_az=h.end_az, span=span,
            center_bias=h.center_bias, cell_dur=h.cell_dur,
            cell_res=h.cell_res, n_cells=h.n_cells,
            message_id=h.message_id, time_of_day=h.time_of_day,
            arrival=arrival, countable=countable, dup_coverage=dup,
            prev_message_id=st.prev_id, revolution=st.revolution,
        )
        st.prev_id = h.message_id
        feature = Feature(antenna=antenna, d=facts, a=st.latest,
                          a_n=st.history, closed=closed)
        self.latest_feature[antenna.key()] = feature
        group = [feature] + [f for k, f in self.latest_feature.items()
                             if k != antenna.key()]
        return feature, group, None


# --------------------------------------------------------------------------
# policy framework
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ActivePolicy:
    policy_id: str
    description: str
    predicate: Callable[[Feature], str]
    params: dict


class CandidatePolicy:
    """<activation, transformation> pair; subclasses implement both."""

    policy_id = "?"

    def activation(self, fg: list[Feature]):
        """True / False / None (undecided)."""
        raise NotImplementedError

    def transform(self, fg: list[Feature]) -> ActivePolicy:
        raise NotImplementedError


@dataclass(frozen=True)
class DetectionParams:
    window: int = 20            # aggregates to learn from
    alpha: float = 1e-6         # stability bound on Var of the span means
    beta: float = 1e-6          # stability bound on Var of the span variances
    categorical_prob: float = 0.99
    id_window: int = 20         # monotone observations before P4 activates
    cadence_period: float = 10.0
    historian_depth: int = 120


class CategoricalCandidate(CandidatePolicy):
    """One header field is expected to hold a single value; flags any
    sweep-step packet that deviates.  Degenerate full-circle packets have
    no sweep-step identity and are judged by the span policy instead."""

    def __init__(self, policy_id: str, field_name: str, freq_key: str,
                 params: DetectionParams):
        self.policy_id = policy_id
        self.field = field_name
        self.freq_key = freq_key
        self.p = params

    def _merged(self, fg):
        hist = fg[0].a_n
        if len(hist) < self.p.window:
            return None
        merged: Counter = Counter()
        for agg in list(hist)[:self.p.window]:
            merged.update(getattr(agg, self.freq_key))
        return merged

    def activation(self, fg):
        merged = self._merged(fg)
        if merged is None:
            return None
        total = sum(merged.values())
        value, count = merged.most_common(1)[0]
        return count / total > self.p.categorical_prob

    def transform(self, fg):
        merged = self._merged(fg)
        value, _ = merged.most_common(1)[0]
        fname = self.field

        def predicate(f: Feature, _value=value, _fname=fname) -> str:
            if not f.d.countable:
                return PASS
            return VIOLATION if getattr(f.d, _fname) != _value else PASS

        return ActivePolicy(
            policy_id=self.policy_id,
            description=f"{self.field} must equal {value}",
            predicate=predicate, params={"value": value},
        )


class SpanBandCandidate(CandidatePolicy):
    """Azimuthal span must stay within three standard deviations of its
    estimated mean (plus one wire LSB for quantization)."""

    policy_id = "P3"

    def __init__(self, params: DetectionParams):
        self.p = params

    def _window(self, fg):
        hist = fg[0].a_n
        if len(hist) < self.p.window:
            return None
        return list(hist)[:self.p.window]

    def activation(self, fg):
        aggs = self._window(fg)
        if aggs is None:
            return None
        var_mu = statistics.pvariance([a.mu_az for a in aggs])
        var_s = statistics.pvariance([a.s_az for a in aggs])
        return var_mu <= self.p.alpha and var_s <= self.p.beta

    def transform(self, fg):
        aggs = self._window(fg)
        mus = [a.mu_az for a in aggs]
        mu = statistics.fmean(mus)
        sigma = math.sqrt(statistics.fmean([a.s_az for a in aggs])
                          + statistics.pvariance(mus))
        lo = mu - 3.0 * sigma - AZ_GUARD_DEG
        hi = mu + 3.0 * sigma + AZ_GUARD_DEG

        def predicate(f: Feature, _lo=lo, _hi=hi) -> str:
            return PASS if _lo <= f.d.span <= _hi else VIOLATION

        return ActivePolicy(
            policy_id=self.policy_id,
            description=f"azimuthal span within [{lo:.4f}, {hi:.4f}] deg",
            predicate=predicate, params={"mu": mu, "sigma": sigma},
        )


class MonotonicIdCandidate(CandidatePolicy):
    """message_id must grow monotonically (equality allowed, 24-bit wrap
    respected); activates after a window of monotone observations."""

    policy_id = "P4"

    def __init__(self, params: DetectionParams):
        self.p = params
        self._streak = 0

    def activation(self, fg):
        d = fg[0].d
        if d.prev_message_id is None:
            return None
        if id_behind(d.message_id, d.prev_message_id):
            return False
        self._streak += 1
        if self._streak >= self.p.id_window:
            return True
        return None

    def transform(self, fg):
        def predicate(f: Feature) -> str:
            prev = f.d.prev_message_id
            if prev is None:
                return UNDECIDED
            return VIOLATION if id_behind(f.d.message_id, prev) else PASS

        return ActivePolicy(
            policy_id=self.policy_id,
            description="message_id monotone (24-bit wrap aware)",
            predicate=predicate, params={},
        )


class SweepEntriesCandidate(CandidatePolicy):
    """Rotation constant within a revolution: each azimuth step carries one
    entry (re-covering swept azimuth flags the packet) and closed
    revolutions keep their entry count inside the learned band."""

    policy_id = "P5"

    def __init__(self, params: DetectionParams):
        self.p = params

    def _window(self, fg):
        hist = fg[0].a_n
        if len(hist) < self.p.window:
            return None
        return list(hist)[:self.p.window]

    def activation(self, fg):
        aggs = self._window(fg)
        if aggs is None:
            return None
        return statistics.pvariance([a.entries for a in aggs]) <= max(self.p.alpha, 0.25)

    def transform(self, fg):
        aggs = self._window(fg)
        counts = [a.entries for a in aggs]
        mu = statistics.fmean(counts)
        sigma = math.sqrt(statistics.pvariance(counts))
        lo = mu - 3.0 * sigma - 0.5
        hi = mu + 3.0 * sigma + 0.5

        def predicate(f: Feature, _lo=lo, _hi=hi) -> str:
            if f.d.dup_coverage:
                return VIOLATION
            if f.closed is not None and not (_lo <= f.closed.entries <= _hi):
                return VIOLATION
            return PASS

        return ActivePolicy(
            policy_id=self.policy_id,
            description=f"one entry per azimuth step; {mu:.1f} entries per revolution",
            predicate=predicate, params={"entries": mu},
        )


class CadenceCandidate(CandidatePolicy):
    """Rotation constant across revolutions: the number of aggregates
    closed within a fixed period stays inside its learned band."""

    policy_id = "P6"

    def __init__(self, params: DetectionParams):
        self.p = params

    def _window(self, fg):
        hist = fg[0].a_n
        if len(hist) < self.p.window:
            return None
        return list(hist)[:self.p.window]

    def activation(self, fg):
        aggs = self._window(fg)
        if aggs is None:
            return None
        return statistics.pvariance([a.wall_duration for a in aggs]) <= max(self.p.alpha, 1e-4)

    def transform(self, fg):
        aggs = self._window(fg)
        period = self.p.cadence_period
        closes = [a.t_close for a in aggs]
        counts = [sum(1 for c in closes if t - period < c <= t) for t in closes]
        full = [c for t, c in zip(closes, counts) if t - period >= closes[0]]
        sample = full or counts
        mu = statistics.fmean(sample)
        sigma = math.sqrt(statistics.pvariance(sample)) if len(sample) > 1 else 0.0
        lo = mu - 3.0 * sigma - 0.5
        hi = mu + 3.0 * sigma + 0.5

        def predicate(f: Feature, _lo=lo, _hi=hi, _period=period) -> str:
            if f.closed is None:
                return PASS
            t = f.closed.t_close
            count = sum(1 for a in f.a_n if t - _period < a.t_close <= t)
            return PASS if _lo <= count <= _hi else VIOLATION

        return ActivePolicy(
            policy_id=self.policy_id,
            description=f"{mu:.1f} revolutions per {period:.0f} s",
            predicate=predicate, params={"rate": mu},
        )


def builtin_candidates(params: DetectionParams | None = None) -> list[CandidatePolicy]:
    p = params or DetectionParams()
    return [
        CategoricalCandidate("P1", "center_bias", "center_bias_freq", p),
        CategoricalCandidate("P2", "n_cells", "n_cells_freq", p),
        SpanBandCandidate(p),
        MonotonicIdCandidate(p),
        SweepEntriesCandidate(p),
        CadenceCandidate(p),
    ]


class PolicyEngine:
    """Candidate and active policy stores plus the generate/evaluate steps."""

    def __init__(self, candidates: list[CandidatePolicy] | None = None,
                 params: DetectionParams | None = None):
        self.params = params or DetectionParams()
        self.candidates: list[CandidatePolicy] = (
            candidates if candidates is not None else builtin_candidates(self.params))
        self.active: list[ActivePolicy] = []
        self.dropped: list[str] = []

    def register(self, candidate: CandidatePolicy) -> None:
        self.candidates.append(candidate)

    def generate(self, fg: list) -> list[ActivePolicy]:
        """Run every candidate's activation; boolean verdicts consume the
        candidate (true instantiates, false discards)."""
        if not fg:
            return []
        fresh = []
        keep = []
        for cand in self.candidates:
            verdict = cand.activation(fg)
            if verdict is None:
                keep.append(cand)
            elif verdict:
                try:
                    policy = cand.transform(fg)
                except Exception:   # a broken transform only costs its candidate
                    self.dropped.append(cand.policy_id)
                    continue
                self.active.append(policy)
                fresh.append(policy)
            else:
                self.dropped.append(cand.policy_id)
        self.candidates = keep
        return fresh

    def evaluate(self, feature: Feature) -> list[Anomaly]:
        out = []
        for policy in self.active:
            if policy.predicate(feature) == VIOLATION:
                out.append(Anomaly(
                    policy_id=policy.policy_id,
                    description=policy.description,
                    antenna=feature.antenna,
                    sector=_packet_sector(feature.d),
                    time=feature.d.arrival,
                    feature=_facts_snapshot(feature.antenna, feature.d),
                ))
        return out


class AnomalySink:
    """Line-delimited JSON records, one per anomaly; optionally also keeps
    them in memory and forwards sectors to a highlight callback."""

    def __init__(self, path=None, keep: bool = True,
                 highlight: Callable[[AnnulusSector], None] | None = None):
        self._fh = open(path, "a", encoding="utf-8") if path else None
        self.records: list[Anomaly] = []
        self.keep = keep
        self.highlight = highlight
        self.io_errors = 0

    def emit(self, a: Anomaly) -> None:
        if self.keep:
            self.records.append(a)
        if self.highlight is not None and a.sector is not None:
            self.highlight(a.sector)
        if self._fh is not None:
            line = json.dumps({
                "policy": a.policy_id, "time": round(a.time, 6),
                "description": a.description,
                "sector": None if a.sector is None else [
                    round(a.sector.a_min, 4), round(a.sector.a_max, 4),
                    round(a.sector.d_min, 1),
                    None if math.isinf(a.sector.d_max) else round(a.sector.d_max, 1)],
                "feature": a.feature,
            }, sort_keys=True)
            self._fh.write(line + "\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class DetectionPipeline:
    """Bus-facing glue: collector -> policy generator -> evaluator -> sink."""

    def __init__(self, antennas: list[AntennaId], sink: AnomalySink,
                 params: DetectionParams | None = None,
                 candidates: list[CandidatePolicy] | None = None):
        self.params = params or DetectionParams()
        self.collector = Collector(antennas, self.params.historian_depth)
        self.engine = PolicyEngine(candidates, self.params)
        self.sink = sink
        self.anomaly_count = 0
        self.sink_errors = 0

    def attach(self, bus) -> None:
        from .bus import TOPIC_ASTERIX
        bus.subscribe(TOPIC_ASTERIX, self.on_delivery)

    def on_delivery(self, d) -> None:
        self.ingest(d.payload, d.time, d.source)

    def ingest(self, payload: bytes, arrival: float, source: str) -> list[Anomaly]:
        feature, group, early = self.collector.collect(payload, arrival, source)
        anomalies = [early] if early is not None else []
        if feature is not None:
            self.engine.generate(group)
            anomalies.extend(self.engine.evaluate(feature))
        for a in anomalies:
            self.anomaly_count += 1
            try:
                self.sink.emit(a)
            except (OSError, ValueError):
                self.sink_errors += 1   # sink trouble never stalls the tap
        return anomalies
