# Parallel map using multiprocessing, but using dill for pickling so that closures can
# be sent to the workers. Inspired by example here https://stackoverflow.com/a/57190433

import dill
import multiprocessing


class ParallelMap:
    """
    Apply functions in parallel, using dill for pickling

    All functions passed to ParallelMap.__call__() take their positional arguments from
    one entry of ``args_list`` and receive the shared ``context`` as a keyword argument.
    Results are returned in the order of ``args_list`` whatever order the workers
    finish in.

    Parameters
    ----------
    np : int
        Number of processes to use. With np=1 everything runs in the calling process.
    context : object
        Sent once to every worker, e.g. the problem instance and run options
    """

    def __init__(self, np, *, context=None):
        self.context = context
        if np > 1:
            self.task_queue = multiprocessing.Queue()
            self.result_queue = multiprocessing.Queue()
            context = dill.dumps(context)
            self.workers = [
                multiprocessing.Process(
                    target=ParallelMap.worker_run,
                    args=(self.task_queue, self.result_queue, context),
                )
                for i in range(np)
            ]
            for worker in self.workers:
                worker.start()
        else:
            self.workers = None

    def close(self):
        if self.workers is not None:
            for worker in self.workers:
                worker.terminate()
                worker.join()
            self.workers = None

    def __enter__(self):
        return self

    def __exit__(self, *args):
        self.close()

    def __del__(self):
        self.close()

    def worker_run(task_queue, result_queue, context):
        """
        'main' function for workers. Gets tasks from task_queue and puts results back in
        result_queue. All tasks come with a list index, and results are returned with
        one, so that __call__() can re-assemble them in order.
        """
        context = dill.loads(context)
        while True:
            i, payload = task_queue.get()
            function, args, kwargs = dill.loads(payload)
            try:
                result = function(*args, context=context, **kwargs)
            except Exception as err:
                # returned rather than raised so that the caller sees it
                result = err
            result_queue.put((i, dill.dumps(result)))

    def __call__(self, function, args_list, **kwargs):
        if self.workers is None:
            return [
                function(*args, context=self.context, **kwargs) for args in args_list
            ]

        args_list = tuple(args_list)
        n_tasks = len(args_list)

        for i, args in enumerate(args_list):
            self.task_queue.put((i, dill.dumps((function, args, kwargs))))

        result = [None for i in range(n_tasks)]
        for count in range(n_tasks):
            i, this_result = self.result_queue.get()
            result[i] = dill.loads(this_result)

        if not self.task_queue.empty():
            raise ValueError("Some tasks not finished")
        if not self.result_queue.empty():
            raise ValueError("Some results not handled")

        for this_result in result:
            if isinstance(this_result, Exception):
                raise this_result

        return result
