"""Wire protocol between the search engine and trainer processes.

Framing: one JSON document per line (UTF-8, ``\\n`` terminated, no interior
newlines), carrying ``proto: 1`` in every message. Requests flow engine ->
trainer on stdin, responses trainer -> engine on stdout; responses may arrive
out of order and are correlated by ``request_id``. The schema is documented
field-by-field in docs/protocol.md.

Decoded learning rates travel on the wire, never raw genes: the trainer stays
agnostic of how configurations are encoded and searched.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import ProtocolError

PROTO_VERSION = 1

REQUEST_FIELDS = (
    "proto",
    "request_id",
    "genotype_id",
    "block_rates",
    "frozen_mask",
    "fold_index",
    "train_sample_ids",
    "fold_ref",
    "seed",
    "max_epochs",
    "patience",
    "loss",
)


@dataclass(frozen=True)
class EvaluateRequest:
    """One fine-tuning evaluation order.

    Exactly one of ``train_sample_ids`` (inline fold contents) or ``fold_ref``
    (name of a pre-distributed fold) is set. ``block_rates[b]`` is zero wherever
    ``frozen_mask[b]`` is zero.
    """

    request_id: str
    genotype_id: str
    block_rates: tuple[float, ...]
    frozen_mask: tuple[int, ...]
    fold_index: int
    seed: int
    max_epochs: int
    patience: int
    loss: str = "categorical-cross-entropy"
    train_sample_ids: tuple[str, ...] | None = None
    fold_ref: str | None = None

    def __post_init__(self):
        if len(self.block_rates) != len(self.frozen_mask):
            raise ProtocolError("block_rates and frozen_mask lengths differ")
        for rate, flag in zip(self.block_rates, self.frozen_mask):
            if flag not in (0, 1):
                raise ProtocolError(f"frozen_mask entries must be 0 or 1, got {flag!r}")
            if flag == 0 and rate != 0.0:
                raise ProtocolError("frozen blocks must carry a zero learning rate")
            if rate < 0.0:
                raise ProtocolError("block_rates must be non-negative")
        if (self.train_sample_ids is None) == (self.fold_ref is None):
            raise ProtocolError(
                "exactly one of train_sample_ids or fold_ref must be provided"
            )


@dataclass(frozen=True)
class EvaluateResponse:
    request_id: str
    status: str
    validation_accuracy: float | None = None
    epochs_run: int = 0
    message: str = ""


def encode_request(req: EvaluateRequest) -> bytes:
    """Encode a request as one newline-terminated UTF-8 JSON line."""
    doc = {
        "proto": PROTO_VERSION,
        "request_id": req.request_id,
        "genotype_id": req.genotype_id,
        "block_rates": list(req.block_rates),
        "frozen_mask": [int(m) for m in req.frozen_mask],
        "fold_index": req.fold_index,
        "seed": req.seed,
        "max_epochs": req.max_epochs,
        "patience": req.patience,
        "loss": req.loss,
    }
    if req.train_sample_ids is not None:
        doc["train_sample_ids"] = list(req.train_sample_ids)
    else:
        doc["fold_ref"] = req.fold_ref
    try:
        line = json.dumps(doc, allow_nan=False, separators=(",", ":"))
    except ValueError as exc:
        raise ProtocolError(f"request contains non-finite numbers: {exc}") from exc
    return line.encode("utf-8") + b"\n"


def decode_request(data: bytes | str) -> EvaluateRequest:
    """Parse one request line; used by Python trainers and round-trip tests."""
    doc = _parse_line(data)
    _check_proto(doc, data)
    try:
        ids = doc.get("train_sample_ids")
        return EvaluateRequest(
            request_id=str(doc["request_id"]),
            genotype_id=str(doc.get("genotype_id", "")),
            block_rates=tuple(float(r) for r in doc["block_rates"]),
            frozen_mask=tuple(int(m) for m in doc["frozen_mask"]),
            fold_index=int(doc["fold_index"]),
            seed=int(doc["seed"]),
            max_epochs=int(doc["max_epochs"]),
            patience=int(doc["patience"]),
            loss=str(doc.get("loss", "categorical-cross-entropy")),
            train_sample_ids=None if ids is None else tuple(str(s) for s in ids),
            fold_ref=doc.get("fold_ref"),
        )
    except ProtocolError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"invalid request: {exc}", payload=data) from exc


def encode_response(resp: EvaluateResponse) -> bytes:
    doc = {
        "proto": PROTO_VERSION,
        "request_id": resp.request_id,
        "status": resp.status,
        "epochs_run": resp.epochs_run,
    }
    if resp.validation_accuracy is not None:
        doc["validation_accuracy"] = resp.validation_accuracy
    if resp.message:
        doc["message"] = resp.message
    try:
        line = json.dumps(doc, allow_nan=False, separators=(",", ":"))
    except ValueError as exc:
        raise ProtocolError(f"response contains non-finite numbers: {exc}") from exc
    return line.encode("utf-8") + b"\n"


def decode_response(data: bytes | str) -> EvaluateResponse:
    """Parse and validate one response line.

    Unknown fields are ignored for forward compatibility. A status of ``ok``
    requires a validation accuracy inside [0, 1]; anything else is a protocol
    violation with the offending payload preserved.
    """
    doc = _parse_line(data)
    _check_proto(doc, data)
    if "request_id" not in doc:
        raise ProtocolError("response missing request_id", payload=data)
    status = doc.get("status")
    if status not in ("ok", "failed"):
        raise ProtocolError(f"response status must be ok or failed, got {status!r}", payload=data)
    accuracy = doc.get("validation_accuracy")
    if status == "ok":
        if accuracy is None:
            raise ProtocolError("ok response missing validation_accuracy", payload=data)
        if not isinstance(accuracy, (int, float)) or isinstance(accuracy, bool):
            raise ProtocolError("validation_accuracy must be a number", payload=data)
        accuracy = float(accuracy)
        if math.isnan(accuracy) or not 0.0 <= accuracy <= 1.0:
            raise ProtocolError(
                f"validation_accuracy {accuracy} outside [0, 1]", payload=data
            )
    return EvaluateResponse(
        request_id=str(doc["request_id"]),
        status=status,
        validation_accuracy=accuracy if status == "ok" else None,
        epochs_run=int(doc.get("epochs_run", 0) or 0),
        message=str(doc.get("message", "") or ""),
    )


def _parse_line(data: bytes | str) -> dict:
    original = data
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"message is not UTF-8: {exc}", payload=original) from exc
    stripped = data.strip()
    if not stripped:
        raise ProtocolError("empty message line", payload=original)
    try:
        doc = json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed message line: {exc}", payload=original) from exc
    if not isinstance(doc, dict):
        raise ProtocolError("message line must be a JSON object", payload=original)
    return doc


def _check_proto(doc: dict, data) -> None:
    if doc.get("proto") != PROTO_VERSION:
        raise ProtocolError(
            f"unsupported protocol version {doc.get('proto')!r} (expected {PROTO_VERSION})",
            payload=data,
        )
