export type ExpressionTag =
  | "happy"
  | "sad"
  | "angry"
  | "fear"
  | "love"
  | "bored"
  | "calm"
  | "neutral";

export interface ChatResponse {
  reply: string;
  sentiment: string;
  probabilities: number[];
  expression: ExpressionTag;
  turn_index: number;
}

export interface TranscriptTurn {
  speaker: "user" | "agent";
  text: string;
  detected_sentiment: string | null;
  timestamp: number;
}

export interface SessionTranscript {
  session_id: string;
  created_at: number;
  last_active: number;
  turns: TranscriptTurn[];
}

export interface HealthResponse {
  status: string;
  checkpoint_id: string;
}

export interface ApiErrorBody {
  error: string;
  code: string;
  retryable: boolean;
}
