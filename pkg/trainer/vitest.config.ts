import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    testTimeout: 120_000,
    hookTimeout: 180_000,
    // training tests share one tf runtime; keep files sequential
    fileParallelism: false,
  },
});
