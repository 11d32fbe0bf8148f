/** Document record in the core's JSONL interchange format. */
export interface CoreDocument {
  id: string;
  text?: string;
  source?: string;
  url?: string;
  lang?: string;
  meta?: Record<string, unknown>;
}

/** One keep/drop decision from the rule filters. */
export interface Verdict {
  id: string;
  keep: boolean;
  /** Identifier of the rule that dropped the doc; null when kept. */
  rule: string | null;
}

/** MinHash signature of one document: 128 zero-padded 16-hex-digit rows. */
export interface SignatureResult {
  id: string | null;
  signature: string[] | null;
  /** Core-reported reason when signature is null. */
  error?: string;
}
