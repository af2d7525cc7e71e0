// Wire types mirroring the tutoring service's JSON payloads.

export interface Box {
  x_min: number;
  y_min: number;
  x_max: number;
  y_max: number;
  label?: string | null;
}

export interface FixationPoint {
  x: number;
  y: number;
  duration: number;
  order_index: number;
}

export type RequestFlag = "reasoning" | "knowledge" | "similar_cases";

export interface TurnPayload {
  boxes: Box[];
  fixations: FixationPoint[];
  text: string;
  confidence: number;
  requests: RequestFlag[];
}

export interface CaseSummary {
  case_id: string;
  image_width: number;
  image_height: number;
  categories: string[];
  finding_count: number;
  anatomy_hints: string[];
  skills: string[];
  region_names: string[];
}

export interface DirectionalHint {
  direction: "N" | "NE" | "E" | "SE" | "S" | "SW" | "W" | "NW";
  magnitude: "near" | "far";
}

export interface FocusPayload {
  passed: boolean;
  matches: Array<[number, string, number]>;
  best_iou: number;
  guidance: DirectionalHint | null;
}

export interface AssessmentPayload {
  reinforcements: string[];
  corrections: Array<[string, string]>;
  missing: string[];
  impression: string;
  per_skill_correct: Record<string, boolean>;
}

export interface SocraticPayload {
  prompts: string[];
  difficulty: "easy" | "medium" | "hard";
  intent: string;
}

export interface SnippetPayload {
  topic: string;
  text: string;
  source: "pubmed" | "fallback";
  citation_id: string | null;
  retrieved_at: number;
}

export interface GazePayload {
  coverage_ratio: number;
  dwell_time_ratio: number;
  sequence_score: number;
  per_region_dwell: Record<string, number>;
  observed_sequence: string[];
  unvisited_regions: string[];
}

export interface SimilarCasePayload {
  case_id: string;
  score: number;
  shared_labels: string[];
  overlay_path: string;
}

export interface MasteryEntry {
  mastery: number;
  attempts: number;
}

export interface TutorResponsePayload {
  message: string;
  assessment: AssessmentPayload | null;
  socratic: SocraticPayload | null;
  knowledge: SnippetPayload[];
  gaze: GazePayload | null;
  mastery: Record<string, MasteryEntry>;
  reasoning_text: string | null;
  similar_cases: SimilarCasePayload[];
  route_log: string[];
  reflection_mode: boolean;
  focus: FocusPayload | null;
  turn_index: number;
}

export interface SessionCreated {
  session_id: string;
  case: CaseSummary;
}

export interface SessionView {
  session_id: string;
  case_id: string;
  case: CaseSummary;
  turn_count: number;
  completed: boolean;
  resolved_findings: string[];
  history: Array<{
    student_turn: TurnPayload & { turn_index: number };
    tutor_response: Omit<TutorResponsePayload, "turn_index">;
  }>;
  mastery: Record<string, MasteryEntry>;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  http_status: number;
}
