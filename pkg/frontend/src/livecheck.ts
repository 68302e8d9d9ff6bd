/** Round-trip check against a live service: one full turn must complete
 * in under two seconds at desk scale.
 *
 *   npm run build && SERVICE_URL=http://127.0.0.1:8000 npm run live-check
 */

import { ChatClient } from "./api.js";

const BUDGET_MS = 2000;

async function main(): Promise<number> {
  const baseUrl = process.env.SERVICE_URL ?? "http://127.0.0.1:8000";
  const client = new ChatClient(baseUrl);

  const health = await client.health();
  if (!health.model_loaded) {
    console.error(`service at ${baseUrl} has no model loaded`);
    return 1;
  }

  const t0 = Date.now();
  const reply = await client.chat("worst day ever i arrived late", "Like", { trace: true });
  const elapsed = Date.now() - t0;

  console.log(`response: ${JSON.stringify(reply.response)}  (score ${reply.score})`);
  console.log(`trace steps: ${reply.trace?.length ?? 0}`);
  console.log(`round trip: ${elapsed} ms (budget ${BUDGET_MS} ms)`);
  if (elapsed > BUDGET_MS) {
    console.error("FAIL: round trip exceeded the budget");
    return 1;
  }
  const tokens = reply.response.split(/\s+/).filter((t) => t.length > 0);
  if (reply.trace && reply.trace.length !== tokens.length) {
    console.error("FAIL: trace length does not match the response tokens");
    return 1;
  }
  console.log("PASS");
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`FAIL: ${err}`);
    process.exit(1);
  },
);
