// Shapes of the service payloads the console consumes. Only fields the
// UI actually shows are typed; everything else rides along untyped.

export interface SessionSummary {
  session_id: string;
  phase: string;
  scene: { n_clusters: number; n_flowers: number };
}

export interface PoseDict {
  position: [number, number, number];
  quaternion: [number, number, number, number]; // x y z w
}

export interface TargetRow {
  cluster_id: number;
  state: string;
  reason: string | null;
  note: string | null;
  confidence: number | null;
  n_valid_pixels: number;
  depth_median_m: number | null;
  pose_world: PoseDict | null;
}

export interface TargetsPayload {
  phase: string;
  targets: TargetRow[];
}

export interface TraceEvent {
  t: number;
  from: string;
  to: string;
  cluster_id?: number;
}

export interface FeedEntry {
  id: number; // server event id; 0 for synthetic entries
  kind: string; // transition | complete | error
  label: string;
  synthetic: boolean; // true when reconstructed by the polling fallback
}

export interface ApiError {
  code: string;
  message: string;
}
