/** Payload shapes of the review server's JSON API, field names verbatim. */

export interface Counterexample {
  id: number;
  label: number;
  features: number[];
  probs: number[];
}

export interface QueueItem {
  id: number;
  index: number;
  margin: number;
  observed_label: number;
  predicted_label: number;
  probs: number[];
  features: number[];
  counterexample: Counterexample | null;
}

export interface QueuePage {
  revision: number;
  total_remaining: number;
  items: QueueItem[];
}

/** Live stats snapshot; always server-computed, never derived client-side. */
export interface Stats {
  reviewed: number;
  keeps: number;
  relabels: number;
  precision: number | null;
  queue_remaining: number;
  estimated_remaining_noise: number;
  revision: number;
  duplicate?: boolean;
}

export interface SessionInfo {
  dataset: { name: string; n: number; dim: number; num_classes: number };
  threshold: number;
  stats: Stats;
  revision: number;
}

export interface DecisionRequest {
  id: number;
  action: "keep" | "relabel";
  new_label?: number;
}

export interface RetrainResult {
  revision: number;
  queue_remaining: number;
}
