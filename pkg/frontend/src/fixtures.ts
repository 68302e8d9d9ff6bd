/** Canned service payloads so the UI and its tests run without a live
 * service (open index.html with ?fixtures=1). */

import { ChatAllResponse, ChatResponse, EMOTIONS } from "./types.js";

export const FIXTURE_CHAT: ChatResponse = {
  response: "i feel so happy for you",
  score: -0.412,
  empty: false,
  emotion: "Happy",
  trace: [
    { token: "i", token_id: 7, partition: "generic", alpha: 0.0,
      memory_norm: 0.52, attention: [0.2, 0.5, 0.3] },
    { token: "feel", token_id: 12, partition: "generic", alpha: 0.08,
      memory_norm: 0.41, attention: [0.1, 0.6, 0.3] },
    { token: "so", token_id: 19, partition: "generic", alpha: 0.05,
      memory_norm: 0.33, attention: [0.1, 0.55, 0.35] },
    { token: "happy", token_id: 83, partition: "emotion", alpha: 0.97,
      memory_norm: 0.12, attention: [0.05, 0.7, 0.25] },
    { token: "for", token_id: 9, partition: "generic", alpha: 0.02,
      memory_norm: 0.07, attention: [0.2, 0.4, 0.4] },
    { token: "you", token_id: 8, partition: "generic", alpha: 0.01,
      memory_norm: 0.03, attention: [0.3, 0.3, 0.4] },
  ],
};

const CANNED: Record<string, string> = {
  Angry: "this makes me angry too",
  Disgust: "that sounds disgusting to me",
  Happy: "i feel so happy for you",
  Like: "i love that so much",
  Sad: "that makes me sad inside",
  Other: "i see what you mean",
};

export const FIXTURE_CHAT_ALL: ChatAllResponse = {
  post: "worst day ever",
  responses: Object.fromEntries(
    EMOTIONS.map((name, i) => [
      name,
      {
        response: CANNED[name],
        score: -(0.4 + 0.2 * i),
        empty: false,
      } as ChatResponse,
    ]),
  ),
};

/** Drop-in replacement for ChatClient backed by the fixtures. */
export class FixtureClient {
  readonly baseUrl = "fixture://";

  async chat(post: string, emotion: string): Promise<ChatResponse> {
    await new Promise((r) => setTimeout(r, 80));
    return { ...FIXTURE_CHAT, emotion, response: CANNED[emotion] ?? FIXTURE_CHAT.response,
             trace: emotion === "Happy" ? FIXTURE_CHAT.trace : undefined };
  }

  async chatAll(post: string): Promise<ChatAllResponse> {
    await new Promise((r) => setTimeout(r, 80));
    return { ...FIXTURE_CHAT_ALL, post };
  }

  async health(): Promise<{ status: string; model_loaded: boolean }> {
    return { status: "ok", model_loaded: true };
  }
}
