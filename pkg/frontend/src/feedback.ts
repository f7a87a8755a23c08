import type { ApiClient } from "./api.js";
import { RATING_DIMENSIONS, type RatingDimension } from "./types.js";

/**
 * Feedback widget state for one assistant message: four 1-5 rating
 * dimensions, a helpful toggle, an inaccuracy flag, and free text.
 * Validation mirrors the server before anything is sent; a successful
 * submit locks the widget in its submitted state.
 */
export class FeedbackWidget {
  readonly inferenceId: string;
  readonly ratings: Partial<Record<RatingDimension, number>> = {};
  helpful: boolean | null = null;
  flaggedInaccurate = false;
  freeText: string | null = null;
  locked = false;

  constructor(inferenceId: string) {
    if (!inferenceId) throw new Error("message has no inference_id");
    this.inferenceId = inferenceId;
  }

  private assertUnlocked(): void {
    if (this.locked) throw new Error("feedback already submitted");
  }

  setRating(dimension: string, value: number): void {
    this.assertUnlocked();
    if (!(RATING_DIMENSIONS as readonly string[]).includes(dimension)) {
      throw new Error(`unknown rating dimension: ${dimension}`);
    }
    if (!Number.isInteger(value) || value < 1 || value > 5) {
      throw new Error(`${dimension} must be an integer in 1-5, got ${value}`);
    }
    this.ratings[dimension as RatingDimension] = value;
  }

  setHelpful(value: boolean | null): void {
    this.assertUnlocked();
    this.helpful = value;
  }

  setFlagged(value: boolean): void {
    this.assertUnlocked();
    this.flaggedInaccurate = value;
  }

  setFreeText(value: string | null): void {
    this.assertUnlocked();
    this.freeText = value;
  }

  async submit(api: ApiClient): Promise<string> {
    this.assertUnlocked();
    const { stored } = await api.submitFeedback({
      inference_id: this.inferenceId,
      ratings: { ...this.ratings },
      helpful: this.helpful,
      free_text: this.freeText,
      flagged_inaccurate: this.flaggedInaccurate,
    });
    this.locked = true;
    return stored;
  }
}
