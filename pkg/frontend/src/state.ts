/** App state and pure transition functions. One request in flight at a
 * time; a failed request leaves the turn list untouched. */

import { ChatAllResponse, ChatResponse, ConversationTurn, Emotion } from "./types.js";

export interface AppState {
  turns: ConversationTurn[];
  pending: boolean;
  error: string | null;
  errorRetryable: boolean;
  selectedEmotion: Emotion;
  compareAll: boolean;
}

export function initialState(): AppState {
  return {
    turns: [],
    pending: false,
    error: null,
    errorRetryable: false,
    selectedEmotion: "Happy",
    compareAll: false,
  };
}

export function beginSend(state: AppState): AppState {
  return { ...state, pending: true, error: null, errorRetryable: false };
}

export function completeTurn(
  state: AppState,
  post: string,
  emotion: Emotion,
  response: ChatResponse,
  compare: ChatAllResponse | null = null,
): AppState {
  const turn: ConversationTurn = {
    post,
    emotion,
    response: response.response,
    trace: response.trace ?? null,
    compare,
  };
  return { ...state, pending: false, turns: [...state.turns, turn] };
}

export function failRequest(state: AppState, message: string, retryable: boolean): AppState {
  return { ...state, pending: false, error: message, errorRetryable: retryable };
}

export function setEmotion(state: AppState, emotion: Emotion): AppState {
  return { ...state, selectedEmotion: emotion };
}

export function setCompareAll(state: AppState, on: boolean): AppState {
  return { ...state, compareAll: on };
}
