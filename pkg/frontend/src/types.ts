// Payload shapes of the review service JSON API. These mirror the server
// exactly; the client adds nothing and never sees ground-truth labels.

export interface ReviewTask {
  task_id: string;
  sample_id: string;
  left_image: string;
  right_image: string;
}

export interface NextResponse {
  task: ReviewTask | null;
  done: number;
  remaining: number;
}

export interface VerdictRequest {
  task_id: string;
  reviewer: string;
  success: boolean;
}

export interface VerdictResponse {
  recorded: boolean;
  completed: boolean;
  review: "accepted" | "rejected" | null;
}

export interface ReviewStats {
  completed_tasks: number;
  success_rate: number | null;
  agreement_rate: number | null;
  total_tasks: number;
  total_verdicts: number;
}
