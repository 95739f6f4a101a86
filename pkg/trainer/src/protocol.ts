/** Protocol v1 line parsing/formatting (see ../../docs/protocol.md). */

export const PROTO_VERSION = 1;

export interface EvaluateRequest {
  requestId: string;
  genotypeId: string;
  blockRates: number[];
  frozenMask: number[];
  foldIndex: number;
  trainSampleIds: string[] | null;
  foldRef: string | null;
  seed: number;
  maxEpochs: number;
  patience: number;
  loss: string;
}

export class ProtocolError extends Error {}

function asNumberArray(value: unknown, field: string): number[] {
  if (!Array.isArray(value) || value.some((v) => typeof v !== "number" || !isFinite(v))) {
    throw new ProtocolError(`${field} must be an array of finite numbers`);
  }
  return value as number[];
}

function asInt(value: unknown, field: string): number {
  if (typeof value !== "number" || !Number.isInteger(value)) {
    throw new ProtocolError(`${field} must be an integer`);
  }
  return value;
}

export function parseRequest(line: string): EvaluateRequest {
  let doc: Record<string, unknown>;
  try {
    doc = JSON.parse(line);
  } catch (err) {
    throw new ProtocolError(`malformed request line: ${err}`);
  }
  if (typeof doc !== "object" || doc === null) {
    throw new ProtocolError("request must be a JSON object");
  }
  if (doc.proto !== PROTO_VERSION) {
    throw new ProtocolError(`unsupported protocol version ${doc.proto}`);
  }
  if (typeof doc.request_id !== "string" || doc.request_id.length === 0) {
    throw new ProtocolError("request_id missing");
  }
  const blockRates = asNumberArray(doc.block_rates, "block_rates");
  const frozenMask = asNumberArray(doc.frozen_mask, "frozen_mask");
  if (blockRates.length !== frozenMask.length) {
    throw new ProtocolError("block_rates and frozen_mask lengths differ");
  }
  if (frozenMask.some((m) => m !== 0 && m !== 1)) {
    throw new ProtocolError("frozen_mask entries must be 0 or 1");
  }
  const ids = doc.train_sample_ids;
  const foldRef = doc.fold_ref;
  if ((ids === undefined) === (foldRef === undefined)) {
    throw new ProtocolError("exactly one of train_sample_ids / fold_ref required");
  }
  if (ids !== undefined && (!Array.isArray(ids) || ids.some((s) => typeof s !== "string"))) {
    throw new ProtocolError("train_sample_ids must be an array of strings");
  }
  return {
    requestId: doc.request_id,
    genotypeId: typeof doc.genotype_id === "string" ? doc.genotype_id : "",
    blockRates,
    frozenMask: frozenMask.map((m) => m | 0),
    foldIndex: asInt(doc.fold_index, "fold_index"),
    trainSampleIds: ids !== undefined ? (ids as string[]) : null,
    foldRef: foldRef !== undefined ? String(foldRef) : null,
    seed: asInt(doc.seed, "seed"),
    maxEpochs: asInt(doc.max_epochs, "max_epochs"),
    patience: asInt(doc.patience, "patience"),
    loss: typeof doc.loss === "string" ? doc.loss : "categorical-cross-entropy",
  };
}

export function okResponse(requestId: string, accuracy: number, epochsRun: number): string {
  return JSON.stringify({
    proto: PROTO_VERSION,
    request_id: requestId,
    status: "ok",
    validation_accuracy: accuracy,
    epochs_run: epochsRun,
  });
}

export function failedResponse(requestId: string, message: string): string {
  return JSON.stringify({
    proto: PROTO_VERSION,
    request_id: requestId,
    status: "failed",
    message,
  });
}
