import type { ExpressionTag } from "./types.js";

export const EXPRESSION_TAGS: readonly ExpressionTag[] = [
  "happy",
  "sad",
  "angry",
  "fear",
  "love",
  "bored",
  "calm",
  "neutral",
];

const isExpression = (value: string): value is ExpressionTag =>
  (EXPRESSION_TAGS as readonly string[]).includes(value);

/** Static asset per expression tag; unknown tags fall back to neutral. */
export const avatarAssetFor = (expression: string): string => {
  const tag = isExpression(expression) ? expression : "neutral";
  return `assets/${tag}.svg`;
};
