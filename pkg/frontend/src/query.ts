// Query console: grounded answers with clickable citations, kept in a
// scrollback so earlier answers can steer the next question.

import { ApiClient, ApiError } from './api';
import type { RagAnswer } from './types';

export interface QuerySession {
  question: string;
  k: number | undefined;
  country: string | undefined;
  answer: RagAnswer | null;
  error: string | null;
}

export class QueryConsole {
  sessions: QuerySession[] = [];

  constructor(
    private readonly api: ApiClient,
    private readonly onNavigate: (siteId: string) => void,
  ) {}

  async submit(question: string, k?: number, country?: string): Promise<QuerySession> {
    const session: QuerySession = {
      question,
      k,
      country,
      answer: null,
      error: null,
    };
    this.sessions.push(session);
    try {
      session.answer = await this.api.query(question, k, country);
    } catch (err) {
      if (err instanceof ApiError && err.code === 'GroundingUnavailableError') {
        session.error =
          'No indexed captions matched this query. Try removing or changing the country filter, or widening the question.';
      } else if (err instanceof ApiError) {
        session.error = `${err.code}: ${err.message}`;
      } else {
        session.error = String(err);
      }
    }
    return session;
  }

  /** Citation ids of a session, in answer order. */
  citations(session: QuerySession): string[] {
    return session.answer ? [...session.answer.cited_site_ids] : [];
  }

  /** A citation click navigates to the cited site's detail view. */
  clickCitation(siteId: string): void {
    this.onNavigate(siteId);
  }
}
