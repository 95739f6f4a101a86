"""Evaluation backends: external trainer processes and in-process surrogates.

An endpoint accepts :class:`~biotune.protocol.EvaluateRequest` objects and
returns responses. The process endpoint speaks the newline-delimited protocol
over the trainer's stdin/stdout, multiplexing up to ``capacity`` in-flight
requests by ``request_id`` (responses may arrive out of order; duplicates and
unknown ids are discarded). Surrogates are deterministic synthetic fitness
landscapes with known optima, used to exercise the full search loop without
any ML framework; they score the engine-side gene vector directly, which
never travels on the wire.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shlex
import subprocess
import threading
from concurrent.futures import Future, TimeoutError as FutureTimeoutError

import numpy as np

from .errors import ProtocolError, TrainerProcessError
from .protocol import EvaluateRequest, EvaluateResponse, decode_response, encode_request

logger = logging.getLogger(__name__)


class TrainerEndpoint:
    """Shared endpoint surface: capacity, timeout, retry budget, request counter."""

    kind = "surrogate"

    def __init__(self, capacity: int = 1, timeout: float = 600.0, retry_budget: int = 1):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.timeout = timeout
        self.retry_budget = retry_budget
        self.n_requests = 0
        self._count_lock = threading.Lock()

    def _count(self) -> None:
        with self._count_lock:
            self.n_requests += 1

    # Endpoints can sit inside estimator params; copying/pickling drops live
    # runtime resources (locks, processes) and keeps the configuration.
    def __getstate__(self):
        state = self.__dict__.copy()
        state["_count_lock"] = None
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._count_lock = threading.Lock()

    def evaluate(self, request: EvaluateRequest, genes=None) -> EvaluateResponse:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ProcessEndpoint(TrainerEndpoint):
    """Trainer subprocess speaking protocol v1 over stdin/stdout.

    A single reader thread resolves pending futures by ``request_id``;
    malformed lines are logged and skipped so the stream resynchronizes at the
    next newline. A request whose reply never arrives times out and surfaces
    as :class:`TimeoutError` to the caller (the fitness layer retries).
    """

    kind = "external-process"

    def __init__(
        self,
        command: str | list[str],
        capacity: int = 1,
        timeout: float = 600.0,
        retry_budget: int = 1,
        cwd: str | None = None,
    ):
        super().__init__(capacity=capacity, timeout=timeout, retry_budget=retry_budget)
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.cwd = cwd
        self._proc: subprocess.Popen | None = None
        self._reader: threading.Thread | None = None
        self._pending: dict[str, Future] = {}
        self._lock = threading.Lock()
        self._write_lock = threading.Lock()
        self._start_lock = threading.Lock()
        self._slots = threading.Semaphore(capacity)
        self._dead = False

    def __getstate__(self):
        state = super().__getstate__()
        state.update(
            _proc=None,
            _reader=None,
            _pending={},
            _lock=None,
            _write_lock=None,
            _start_lock=None,
            _slots=None,
            _dead=False,
        )
        return state

    def __setstate__(self, state):
        super().__setstate__(state)
        self._pending = {}
        self._lock = threading.Lock()
        self._write_lock = threading.Lock()
        self._start_lock = threading.Lock()
        self._slots = threading.Semaphore(self.capacity)

    def start(self) -> None:
        with self._start_lock:
            self._start_locked()

    def _start_locked(self) -> None:
        if self._proc is not None:
            return
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
                cwd=self.cwd,
            )
        except OSError as exc:
            raise TrainerProcessError(
                f"failed to launch trainer {self.command!r}: {exc}"
            ) from exc
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def evaluate(self, request: EvaluateRequest, genes=None) -> EvaluateResponse:
        if self._dead:
            raise TrainerProcessError("trainer process is no longer usable")
        self.start()
        payload = encode_request(request)
        future: Future = Future()
        self._slots.acquire()
        try:
            with self._lock:
                self._pending[request.request_id] = future
            try:
                with self._write_lock:
                    assert self._proc is not None and self._proc.stdin is not None
                    self._proc.stdin.write(payload)
                    self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                self._fail_all(TrainerProcessError(f"trainer stdin closed: {exc}"))
                raise TrainerProcessError(f"trainer stdin closed: {exc}") from exc
            self._count()
            try:
                return future.result(timeout=self.timeout)
            except FutureTimeoutError:
                raise TimeoutError(
                    f"no reply to request {request.request_id} within {self.timeout}s"
                ) from None
        finally:
            with self._lock:
                self._pending.pop(request.request_id, None)
            self._slots.release()

    def _read_loop(self) -> None:
        assert self._proc is not None and self._proc.stdout is not None
        for raw in self._proc.stdout:
            try:
                response = decode_response(raw)
            except ProtocolError as exc:
                self._dispatch_protocol_error(raw, exc)
                continue
            self._resolve(response.request_id, response)
        self._fail_all(TrainerProcessError("trainer closed its stdout"))

    def _dispatch_protocol_error(self, raw: bytes, exc: ProtocolError) -> None:
        # If the broken line still names a pending request, fail it promptly
        # instead of letting the caller wait for the timeout.
        request_id = None
        try:
            doc = json.loads(raw.decode("utf-8", errors="replace"))
            if isinstance(doc, dict):
                request_id = doc.get("request_id")
        except (json.JSONDecodeError, ValueError):
            pass
        if request_id is not None:
            with self._lock:
                future = self._pending.pop(str(request_id), None)
            if future is not None:
                future.set_exception(exc)
                return
        logger.warning("discarding malformed trainer line: %s", exc)

    def _resolve(self, request_id: str, response: EvaluateResponse) -> None:
        with self._lock:
            future = self._pending.pop(request_id, None)
        if future is None:
            logger.debug("discarding duplicate or unknown response id %r", request_id)
            return
        future.set_result(response)

    def _fail_all(self, error: Exception) -> None:
        self._dead = True
        with self._lock:
            pending, self._pending = self._pending, {}
        for future in pending.values():
            if not future.done():
                future.set_exception(error)

    def close(self) -> None:
        self._dead = True
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait(timeout=5)
        if self._reader is not None:
            self._reader.join(timeout=5)
        self._fail_all(TrainerProcessError("endpoint closed"))


class SurrogateEndpoint(TrainerEndpoint):
    """Base for pure in-process oracles; concurrency-safe, no transport."""

    kind = "surrogate"

    def __init__(self, capacity: int = 8):
        super().__init__(capacity=capacity, timeout=60.0, retry_budget=0)

    def evaluate(self, request: EvaluateRequest, genes=None) -> EvaluateResponse:
        self._count()
        accuracy = self._accuracy(request, genes)
        return EvaluateResponse(
            request_id=request.request_id,
            status="ok",
            validation_accuracy=float(np.clip(accuracy, 0.0, 1.0)),
            epochs_run=1,
        )

    def _accuracy(self, request: EvaluateRequest, genes) -> float:
        raise NotImplementedError


class SphereSurrogate(SurrogateEndpoint):
    """Smooth landscape: accuracy = 1 - ||genes - optimum||^2 / len(genes).

    Deterministic, seed- and fold-independent; maximal accuracy 1.0 exactly at
    the optimum gene vector.
    """

    def __init__(self, optimum):
        super().__init__()
        self.optimum = np.asarray(optimum, dtype=np.float64)
        if self.optimum.ndim != 1 or self.optimum.size < 2:
            raise ValueError("optimum must be a gene-length vector")
        if np.any(self.optimum < 0.0) or np.any(self.optimum > 1.0):
            raise ValueError("optimum must lie in [0, 1]")

    def _accuracy(self, request: EvaluateRequest, genes) -> float:
        if genes is None:
            raise TrainerProcessError("sphere surrogate needs the engine-side gene vector")
        genes = np.asarray(genes, dtype=np.float64)
        if genes.shape != self.optimum.shape:
            raise TrainerProcessError(
                f"gene vector length {genes.size} does not match optimum length "
                f"{self.optimum.size}"
            )
        return 1.0 - float(np.sum((genes - self.optimum) ** 2)) / genes.size


class MaskMatchSurrogate(SurrogateEndpoint):
    """Landscape with a known optimal freeze mask and per-block rate exponents.

    accuracy = 1 - hamming(frozen_mask, target_mask)/blocks - penalty + noise,
    clamped to [0, 1]. The penalty is ``penalty_coeff`` times the mean, over
    unfrozen blocks, of |log10(rate/base) - target_exponent| / 2 (the /2 maps
    the maximal exponent distance onto [0, 1]). The default coefficient keeps
    the per-block mask reward above the worst-case marginal exponent penalty,
    so unfreezing a correct block is never punished outright. Noise is
    Gaussian with the given stddev, seeded from (instance seed, request seed,
    fold, genes) so repeated evaluations are bit-for-bit reproducible.
    """

    def __init__(
        self,
        target_mask,
        noise: float = 0.0,
        base_rates=None,
        target_exponents=None,
        penalty_coeff: float = 0.25,
        instance_seed: int = 0,
    ):
        super().__init__()
        self.target_mask = np.asarray(target_mask, dtype=np.int8)
        if self.target_mask.ndim != 1 or not np.all(np.isin(self.target_mask, (0, 1))):
            raise ValueError("target_mask must be a vector of 0/1 entries")
        blocks = self.target_mask.size
        if base_rates is None:
            self.base_rates = np.ones(blocks)
        else:
            self.base_rates = np.asarray(base_rates, dtype=np.float64)
            if self.base_rates.shape != (blocks,) or np.any(self.base_rates <= 0):
                raise ValueError("base_rates must be positive with one entry per block")
        if target_exponents is None:
            self.target_exponents = np.zeros(blocks)
        else:
            self.target_exponents = np.asarray(target_exponents, dtype=np.float64)
            if self.target_exponents.shape != (blocks,):
                raise ValueError("target_exponents must have one entry per block")
            if np.any(np.abs(self.target_exponents) > 1.0):
                raise ValueError("target_exponents must lie in [-1, 1]")
        if noise < 0:
            raise ValueError("noise stddev must be >= 0")
        self.noise = float(noise)
        self.penalty_coeff = float(penalty_coeff)
        self.instance_seed = int(instance_seed)

    def optimum_genotype(self) -> np.ndarray:
        """A gene vector decoding exactly to the target mask and exponents.

        The freeze threshold is placed strictly below every selected gene
        (selected gene values are 0.5 + exponent/2), and frozen blocks sit
        exactly on the threshold, which the inclusive boundary freezes.
        """
        genes = np.empty(self.target_mask.size + 1)
        selected = self.target_mask == 1
        genes[:-1][selected] = 0.5 + self.target_exponents[selected] / 2.0
        if np.any(selected):
            lowest = float(genes[:-1][selected].min())
            if lowest <= 0.0:
                # exponent -1 maps to gene 0, which no threshold can select;
                # nudge the gene up by one ulp to make the mask attainable
                genes[:-1][selected] = np.maximum(
                    genes[:-1][selected], np.nextafter(0.0, 1.0)
                )
                lowest = float(genes[:-1][selected].min())
            threshold = lowest / 2.0
        else:
            threshold = 0.5
        genes[:-1][~selected] = threshold
        genes[-1] = threshold
        return genes

    def _accuracy(self, request: EvaluateRequest, genes) -> float:
        mask = np.asarray(request.frozen_mask, dtype=np.int8)
        if mask.shape != self.target_mask.shape:
            raise TrainerProcessError(
                f"request has {mask.size} blocks, surrogate expects {self.target_mask.size}"
            )
        hamming = float(np.sum(mask != self.target_mask)) / mask.size
        unfrozen = mask == 1
        if np.any(unfrozen):
            rates = np.asarray(request.block_rates, dtype=np.float64)
            exponents = np.log10(rates[unfrozen] / self.base_rates[unfrozen])
            distance = np.abs(exponents - self.target_exponents[unfrozen]) / 2.0
            penalty = self.penalty_coeff * float(np.mean(distance))
        else:
            penalty = 0.0
        value = 1.0 - hamming - penalty
        if self.noise > 0.0:
            value += self._noise_draw(request, genes)
        return value

    def _noise_draw(self, request: EvaluateRequest, genes) -> float:
        digest = hashlib.blake2b(digest_size=8)
        digest.update(self.instance_seed.to_bytes(8, "little", signed=True))
        digest.update(request.seed.to_bytes(8, "little", signed=True))
        digest.update(request.fold_index.to_bytes(8, "little", signed=True))
        if genes is not None:
            digest.update(np.asarray(genes, dtype=np.float64).tobytes())
        else:
            digest.update(np.asarray(request.block_rates, dtype=np.float64).tobytes())
        rng = np.random.default_rng(int.from_bytes(digest.digest(), "little"))
        return float(rng.normal(0.0, self.noise))


def surrogate_sphere(optimum) -> SphereSurrogate:
    """Endpoint whose accuracy peaks at the given gene vector."""
    return SphereSurrogate(optimum)


def surrogate_mask_match(target_mask, noise: float = 0.0, **kwargs) -> MaskMatchSurrogate:
    """Endpoint with a known optimal freeze mask; see :class:`MaskMatchSurrogate`."""
    return MaskMatchSurrogate(target_mask, noise=noise, **kwargs)


def random_mask_match_instance(
    blocks: int, instance_seed: int, noise: float = 0.0, base_rates=None
) -> MaskMatchSurrogate:
    """Seeded random mask-match instance (random target mask and exponents)."""
    rng = np.random.default_rng(instance_seed)
    mask = rng.integers(0, 2, size=blocks)
    exponents = np.round(rng.uniform(-1.0, 1.0, size=blocks), 6)
    return MaskMatchSurrogate(
        mask,
        noise=noise,
        base_rates=base_rates,
        target_exponents=exponents,
        instance_seed=instance_seed,
    )
