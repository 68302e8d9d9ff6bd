/** Wire types, mirroring docs/api.md of the service exactly. */

export const EMOTIONS = ["Angry", "Disgust", "Happy", "Like", "Sad", "Other"] as const;

export type Emotion = (typeof EMOTIONS)[number];

export interface TraceStep {
  token: string;
  token_id: number;
  partition: "generic" | "emotion";
  alpha: number;
  memory_norm: number;
  attention: number[];
}

export interface ChatResponse {
  response: string;
  score: number | null;
  empty: boolean;
  emotion?: string;
  classifier_emotion?: string;
  trace?: TraceStep[];
}

export interface ChatAllResponse {
  post: string;
  responses: Record<string, ChatResponse>;
}

/** One rendered exchange; everything the UI shows is derived from these. */
export interface ConversationTurn {
  post: string;
  emotion: Emotion;
  response: string;
  trace: TraceStep[] | null;
  compare: ChatAllResponse | null;
}

export function isEmotion(name: string): name is Emotion {
  return (EMOTIONS as readonly string[]).includes(name);
}
