// Wire types of the study service; field names match the server exactly.

export interface Dimension {
  key: string;
  title: string;
  question: string;
}

export interface TaskImages {
  garment: string;
  ground_truth: string;
  generated: string;
}

export interface Progress {
  items_total: number;
  ratings_total: number;
  items_fully_covered: number;
  min_ratings_per_item: number;
  pending_assignments: number;
}

export interface Task {
  assignment_id: string;
  triplet_id: string;
  method_id: string;
  images: TaskImages;
  dimensions: Dimension[];
  progress: Progress;
}

export type SubmitOutcome = "ok" | "conflict" | "gone" | "rejected";

export type Score = 1 | 2 | 3 | 4 | 5;

export const SCORE_VALUES: Score[] = [1, 2, 3, 4, 5];
