import type { ChatResponse, ExpressionTag, SessionTranscript, TranscriptTurn } from "./types.js";

export interface UiState {
  sessionId: string | null;
  turns: TranscriptTurn[];
  expression: ExpressionTag;
  pending: boolean;
  /** Message that failed and can be retried, if any. */
  failedText: string | null;
  errorMessage: string | null;
}

export const initialState = (): UiState => ({
  sessionId: null,
  turns: [],
  expression: "neutral",
  pending: false,
  failedText: null,
  errorMessage: null,
});

/** Begin a chat request. Returns null when one is already in flight
 * (single-flight rule: the second submit is suppressed). */
export const beginRequest = (state: UiState): UiState | null => {
  if (state.pending) {
    return null;
  }
  return { ...state, pending: true, failedText: null, errorMessage: null };
};

/** Append the user/agent turn pair from a successful chat call. */
export const applyChatSuccess = (
  state: UiState,
  userText: string,
  response: ChatResponse,
): UiState => ({
  ...state,
  pending: false,
  failedText: null,
  errorMessage: null,
  expression: response.expression,
  turns: [
    ...state.turns,
    {
      speaker: "user",
      text: userText,
      detected_sentiment: response.sentiment,
      timestamp: Date.now() / 1000,
    },
    {
      speaker: "agent",
      text: response.reply,
      detected_sentiment: null,
      timestamp: Date.now() / 1000,
    },
  ],
});

/** A failed send leaves the transcript untouched and offers a retry. */
export const applyChatFailure = (
  state: UiState,
  userText: string,
  message: string,
): UiState => ({
  ...state,
  pending: false,
  failedText: userText,
  errorMessage: message,
});

/** Replace local state with the server-side transcript (reload path). */
export const applyTranscript = (state: UiState, transcript: SessionTranscript): UiState => ({
  ...state,
  sessionId: transcript.session_id,
  turns: [...transcript.turns],
  pending: false,
  failedText: null,
  errorMessage: null,
});

export const withSession = (state: UiState, sessionId: string): UiState => ({
  ...initialState(),
  sessionId,
  expression: state.expression,
});
