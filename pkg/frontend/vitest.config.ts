import { defineConfig } from "vitest/config";

// Episodes run against a spawned Python server; allow for interpreter
// startup and full-length episodes.
export default defineConfig({
  test: {
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
