import { defineConfig } from "vitest/config";

// Each spec spawns the real gateway subprocess, so give the hooks room.
export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
