// Wire protocol for the play service (JSON over one websocket).
// The server is authoritative; the client never simulates game rules.

export const PROTOCOL_VERSION = 1;

export type Mode = 'with-assistant' | 'solo';
export type Phase = 'awaiting-start' | 'in-episode' | 'finished';

export interface Scores {
	episodes: number;
	joint: number;
	due_to_p: number;
	due_to_a: number;
}

export interface Hello {
	type: 'hello';
	protocol: number;
	session_id: number;
	mode: Mode;
	horizon: number;
}

export interface TaskDisplay {
	type: 'task_display';
	protocol: number;
	episode: number;
	target_class: number;
	target_fruit: string;
	task: unknown;
	task_seed: number;
}

export interface StateFrame {
	type: 'state_frame';
	protocol: number;
	step: number;
	horizon: number;
	positions: [number, number][];
	objects: { cell: [number, number]; class: number }[];
	target_class: number;
	scores: Scores;
	mode: Mode;
	grid: { width: number; height: number; cells: [number, number][] };
}

export interface StepResult {
	type: 'step_result';
	protocol: number;
	step: number;
	action_p: number;
	action_a: number;
	reward: number;
	split: [number, number];
	collected: { cell: [number, number]; class: number; by: string }[];
	done: boolean;
}

export interface EpisodeSummary {
	type: 'episode_summary';
	protocol: number;
	episode: number;
	practice: boolean;
	joint_reward: number;
	due_to_p: number;
	due_to_a: number;
	scores: Scores;
}

export interface Rejected {
	type: 'rejected';
	protocol: number;
	reason: string;
}

export interface ModeSet {
	type: 'mode_set';
	protocol: number;
	mode: Mode;
	practice: boolean;
}

export type ServerMessage =
	| Hello
	| TaskDisplay
	| StateFrame
	| StepResult
	| EpisodeSummary
	| Rejected
	| ModeSet;

export type ClientMessage =
	| { type: 'start_episode'; task_seed?: number }
	| { type: 'action'; key: 'Space' | 'a' | 'd' | 'w' | 's' }
	| { type: 'set_mode'; mode: Mode; practice?: boolean };

export const FRUIT_NAMES = ['lemons', 'plums'] as const;
