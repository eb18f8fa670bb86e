/**
 * API payload types, mirroring the JSON schemas published by the backend
 * under docs/schema. The client never derives domain values from these; it
 * only displays what the API returns.
 */

export interface BoundingBox {
  x_min: number;
  y_min: number;
  x_max: number;
  y_max: number;
}

export interface Keypoint {
  x: number;
  y: number;
  visible: boolean;
}

export interface WheelKeypoints {
  top: Keypoint;
  right: Keypoint;
  bottom: Keypoint;
  left: Keypoint;
  center: Keypoint;
  ground_contact: Keypoint;
}

export interface Measurement {
  kind: "center_line" | "ground_line";
  length_mm: number;
  length_px: number;
  scale_mm_per_px: number;
  wheel_ids: [number, number];
  endpoints: [[number, number], [number, number]];
}

export const ORIENTATIONS = [
  "front",
  "front_left",
  "front_right",
  "rear",
  "rear_left",
  "rear_right",
  "left",
  "right",
] as const;

export type Orientation = (typeof ORIENTATIONS)[number];

export interface CarAnnotation {
  car_box: BoundingBox;
  car_score: number;
  number: string | null;
  number_confidence: number | null;
  number_off_roster: boolean;
  manufacturer: string | null;
  orientation: Orientation | null;
  team_assignment: string | null;
  embedding_ref: string | null;
  measurements: Measurement[];
  wheel_keypoints: WheelKeypoints[];
}

export type PhotoStatus = "pending" | "processed" | "no_car" | "failed";

export interface PhotoRecord {
  photo_id: string;
  event_id: string;
  uri: string;
  width_px: number;
  height_px: number;
  captured_at: string | null;
  status: PhotoStatus;
  annotations: CarAnnotation[];
}

export interface PhotoPage {
  items: PhotoRecord[];
  page: number;
  page_size: number;
  total: number;
  pages: number;
}

export interface OverlayCar {
  car_box: BoundingBox;
  number: string | null;
  team_assignment: string | null;
  orientation: Orientation | null;
  manufacturer: string | null;
  wheel_keypoints: WheelKeypoints[];
  measurements: Measurement[];
}

export interface Overlay {
  photo_id: string;
  width_px: number;
  height_px: number;
  status: PhotoStatus;
  cars: OverlayCar[];
}

export interface EventInfo {
  event_id: string;
  name: string;
  series: string;
  date: string;
}

export interface EventSummary extends EventInfo {
  photo_counts: Record<PhotoStatus, number>;
  total_photos: number;
  feedback_count: number;
}

export interface OnlineMetrics {
  event_id: string;
  na_photo_fraction: number | null;
  feedback_fraction: number | null;
  denominator: number;
}

export interface TeamState {
  centroid: number[] | null;
  reference_count: number;
  finalized: boolean;
}

export interface TeamSnapshot {
  event_id: string;
  config: Record<string, unknown>;
  teams: Record<string, TeamState>;
}

export const FEEDBACK_REASONS = [
  "wrong_number",
  "wrong_team",
  "wrong_orientation",
  "missed_car",
  "spurious_car",
  "wrong_measurement",
  "other",
] as const;

export type FeedbackReason = (typeof FEEDBACK_REASONS)[number];

export interface FeedbackRecord {
  photo_id: string;
  submitted_at: string;
  reason: FeedbackReason;
  note: string;
  exported_to_testset: boolean;
}
