/**
 * Bindings for the dingo constrained-decoding engine.
 *
 * The engine is consumed strictly through its public surface: the `dingo`
 * CLI, the vocabulary JSON format, the DGPB probability-block format, and
 * the DGTA automaton format (state count and fingerprint are read from the
 * documented header). Exposes exactly: compile, decode_block, state_count,
 * save, load.
 */

import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

const DGTA_MAGIC = "DGTA";
const DGPB_MAGIC = "DGPB";
const FORMAT_VERSION = 1;

export interface DecodeResult {
  tokens: number[];
  text: string;
  end_state: number;
  log_prob: number;
}

export interface AutomatonInfo {
  states: number;
  vocab_size: number;
  mask_id: number;
  start: number;
  fingerprint: string; // hex of the 8-byte vocabulary hash
}

export class BoundAutomaton {
  readonly dir: string;
  readonly automatonPath: string;
  readonly vocabPath: string;
  readonly info: AutomatonInfo;
  private released = false;

  constructor(dir: string, automatonPath: string, vocabPath: string) {
    this.dir = dir;
    this.automatonPath = automatonPath;
    this.vocabPath = vocabPath;
    this.info = parseHeader(fs.readFileSync(automatonPath));
  }

  assertAlive(): void {
    if (this.released) {
      throw new Error("automaton handle has been released");
    }
  }

  release(): void {
    if (!this.released) {
      this.released = true;
      fs.rmSync(this.dir, { recursive: true, force: true });
    }
  }
}

const DGTA_HEADER_BYTES = 52;

function parseHeader(buf: Buffer): AutomatonInfo {
  if (buf.length < DGTA_HEADER_BYTES) {
    throw new Error("automaton payload truncated before header end");
  }
  if (buf.toString("latin1", 0, 4) !== DGTA_MAGIC) {
    throw new Error(`bad automaton magic ${buf.toString("latin1", 0, 4)}`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== FORMAT_VERSION) {
    throw new Error(`unsupported automaton format version ${version}`);
  }
  return {
    fingerprint: buf.subarray(8, 16).toString("hex"),
    states: buf.readUInt32LE(16),
    start: buf.readUInt32LE(20),
    mask_id: buf.readUInt32LE(28),
    vocab_size: buf.readUInt32LE(32),
  };
}

function runCli(args: string[]): { status: number; stdout: string; stderr: string } {
  const proc = spawnSync("dingo", args, { encoding: "utf-8", maxBuffer: 1 << 28 });
  if (proc.error) {
    throw new Error(`failed to run dingo CLI: ${proc.error.message}`);
  }
  return { status: proc.status ?? -1, stdout: proc.stdout, stderr: proc.stderr };
}

function writeVocab(dir: string, tokens: string[], mask: string): string {
  const all = tokens.includes(mask) ? tokens : [...tokens, mask];
  const vocabPath = path.join(dir, "vocab.json");
  fs.writeFileSync(vocabPath, JSON.stringify({ tokens: all, mask }), "utf-8");
  return vocabPath;
}

function writeBlock(dir: string, probs: number[][]): string {
  const d = probs.length;
  const vocabSize = d > 0 ? probs[0].length : 0;
  const buf = Buffer.alloc(16 + 4 * d * vocabSize);
  buf.write(DGPB_MAGIC, 0, "latin1");
  buf.writeUInt32LE(FORMAT_VERSION, 4);
  buf.writeUInt32LE(d, 8);
  buf.writeUInt32LE(vocabSize, 12);
  let off = 16;
  for (const row of probs) {
    if (row.length !== vocabSize) {
      throw new Error("ragged probability rows");
    }
    for (const v of row) {
      buf.writeFloatLE(v, off);
      off += 4;
    }
  }
  const blockPath = path.join(dir, "probs.dgpb");
  fs.writeFileSync(blockPath, buf);
  return blockPath;
}

/**
 * Compile a pattern against a vocabulary. The mask string is appended to
 * the token list when absent, mirroring the engine's vocabulary builder.
 */
export function compile(regex: string, tokens: string[], mask: string): BoundAutomaton {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "dingo-bind-"));
  try {
    const vocabPath = writeVocab(dir, tokens, mask);
    const automatonPath = path.join(dir, "automaton.dgta");
    const res = runCli([
      "compile",
      "--regex",
      regex,
      "--vocab",
      vocabPath,
      "--out",
      automatonPath,
    ]);
    if (res.status !== 0) {
      throw new Error(`compile failed (exit ${res.status}): ${res.stderr.trim()}`);
    }
    return new BoundAutomaton(dir, automatonPath, vocabPath);
  } catch (err) {
    fs.rmSync(dir, { recursive: true, force: true });
    throw err;
  }
}

/**
 * Decode one probability block (d rows of |V| probabilities, float32
 * precision on the wire). Returns null when no valid prefix exists.
 */
export function decode_block(
  handle: BoundAutomaton,
  probs: number[][],
  start_state?: number,
): DecodeResult | null {
  handle.assertAlive();
  const blockPath = writeBlock(handle.dir, probs);
  const args = [
    "decode",
    "--automaton",
    handle.automatonPath,
    "--vocab",
    handle.vocabPath,
    "--probs",
    blockPath,
  ];
  if (start_state !== undefined) {
    args.push("--start-state", String(start_state));
  }
  const res = runCli(args);
  if (res.status === 3) {
    return null;
  }
  if (res.status !== 0) {
    throw new Error(`decode failed (exit ${res.status}): ${res.stderr.trim()}`);
  }
  const payload = JSON.parse(res.stdout);
  return {
    tokens: payload.tokens,
    text: payload.text,
    end_state: payload.end_state,
    log_prob: payload.log_prob,
  };
}

/** Number of automaton states (dead sink included), from the DGTA header. */
export function state_count(handle: BoundAutomaton): number {
  handle.assertAlive();
  return handle.info.states;
}

/** Persist the compiled automaton to a caller-owned path. */
export function save(handle: BoundAutomaton, outPath: string): void {
  handle.assertAlive();
  fs.copyFileSync(handle.automatonPath, outPath);
}

/**
 * Load a previously saved automaton. The token list and mask must be the
 * ones it was compiled against; the engine verifies the vocabulary
 * fingerprint on every decode.
 */
export function load(automatonPath: string, tokens: string[], mask: string): BoundAutomaton {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "dingo-bind-"));
  try {
    const vocabPath = writeVocab(dir, tokens, mask);
    const copied = path.join(dir, "automaton.dgta");
    fs.copyFileSync(automatonPath, copied);
    return new BoundAutomaton(dir, copied, vocabPath);
  } catch (err) {
    fs.rmSync(dir, { recursive: true, force: true });
    throw err;
  }
}
